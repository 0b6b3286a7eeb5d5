//! Simultaneous system identification and model predictive control.
//!
//! An unknown additive term in control-affine dynamics is learned online with
//! random Fourier features and projected online gradient descent, and the live
//! model is fed into a nonlinear receding-horizon controller (iLQR with input
//! boxes) over the whole look-ahead horizon.
//!
//! The numerical core is generic over the scalar type through [`Real`]; the
//! `*64` aliases below fix it to `f64`, which is what the experiment harness
//! uses.

// `!(a > b)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod estimator;
pub mod metrics;
pub mod mpc;
pub mod plants;
pub mod rff;
pub mod scalar;
pub mod seeds;

pub use error::{Error, Result};
pub use scalar::Real;

pub type KernelSpec64 = rff::KernelSpec<f64>;
pub type FeatureSet64 = rff::FeatureSet<f64>;
pub type ParamEstimate64 = rff::ParamEstimate<f64>;
pub type EstimatorState64 = estimator::EstimatorState<f64>;
pub type PlantModel64 = plants::PlantModel<f64>;
pub type CostSpec64 = mpc::CostSpec<f64>;
pub type MpcSolution64 = mpc::MpcSolution<f64>;
pub type EpisodeConfig64 = controller::EpisodeConfig<f64>;
pub type TrajectoryLog64 = controller::TrajectoryLog<f64>;
pub type RegretReport64 = metrics::RegretReport<f64>;

pub type KernelSpec32 = rff::KernelSpec<f32>;
pub type FeatureSet32 = rff::FeatureSet<f32>;
pub type ParamEstimate32 = rff::ParamEstimate<f32>;
pub type EstimatorState32 = estimator::EstimatorState<f32>;
