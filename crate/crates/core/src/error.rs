use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("input outside the admissible box at component {index}: {value} not in [{lower}, {upper}]")]
    InputOutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("quaternion norm {norm} deviates from 1")]
    InvalidQuaternion { norm: f64 },
    #[error("non-finite value during integration")]
    NumericalBlowUp,
    #[error("non-finite rollout at step {step}")]
    NonFiniteRollout { step: usize },
    #[error("plant has no evaluable true disturbance")]
    MissingDisturbance,
    #[error("episode configurations are incompatible: {0}")]
    IncompatibleConfigs(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context, expected, got })
    }
}
