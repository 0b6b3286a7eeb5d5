//! Online least-squares estimation of the feature coefficients by projected
//! online gradient descent, plus the best-fixed-parameter comparator used for
//! static regret.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::rff::{clamp_scalar, ParamEstimate};
use crate::scalar::Real;

/// Learning-rate schedule: a fixed step, or `c / √T` for a known horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Fixed(f64),
    HorizonScaled { c: f64, horizon: usize },
}

impl LearningRate {
    pub fn value(&self) -> f64 {
        match *self {
            LearningRate::Fixed(eta) => eta,
            LearningRate::HorizonScaled { c, horizon } => c / (horizon.max(1) as f64).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.value();
        if eta.is_finite() && eta >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "learning rate must be nonnegative, got {eta}"
            )))
        }
    }
}

/// One data point `(Φ(z_t), h(z_t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub features: DVector<T>,
    pub target: DVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState<T> {
    pub params: ParamEstimate<T>,
    pub learning_rate: T,
    pub step_count: u64,
    pub cumulative_loss: T,
}

impl<T: Real> EstimatorState<T> {
    /// Zero-initialized coefficients.
    pub fn new(output_dim: usize, count: usize, radius: T, learning_rate: T) -> Result<Self> {
        Self::with_params(ParamEstimate::zeros(output_dim, count, radius)?, learning_rate)
    }

    pub fn with_params(params: ParamEstimate<T>, learning_rate: T) -> Result<Self> {
        if !(learning_rate >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be nonnegative, got {}",
                learning_rate.as_f64()
            )));
        }
        Ok(Self {
            params,
            learning_rate,
            step_count: 0,
            cumulative_loss: T::zero(),
        })
    }

    fn residual(&self, obs: &Observation<T>) -> Result<DVector<T>> {
        check_dim("observation target", self.params.output_dim(), obs.target.len())?;
        let prediction = self.params.combine(&obs.features)?;
        Ok(&obs.target - prediction)
    }

    /// `‖target − (1/M) α̂ Φ‖²`.
    pub fn loss(&self, obs: &Observation<T>) -> Result<T> {
        Ok(self.residual(obs)?.norm_squared())
    }

    /// Row `r` is `-(2/M) (target_r − prediction_r) Φᵀ`.
    pub fn gradient(&self, obs: &Observation<T>) -> Result<DMatrix<T>> {
        let residual = self.residual(obs)?;
        let scale = -T::lit(2.0) / T::lit(self.params.count() as f64);
        Ok((residual * scale) * obs.features.transpose())
    }

    /// One projected gradient step; returns the next state.
    pub fn update(&self, obs: &Observation<T>) -> Result<Self> {
        let loss = self.loss(obs)?;
        let grad = self.gradient(obs)?;
        let stepped = self.params.blocks() - grad * self.learning_rate;
        let params = ParamEstimate::project(stepped, self.params.radius())?;
        Ok(Self {
            params,
            learning_rate: self.learning_rate,
            step_count: self.step_count + 1,
            cumulative_loss: self.cumulative_loss + loss,
        })
    }
}

/// Euclidean projection onto the coefficient box.
pub fn project<T: Real>(params: &ParamEstimate<T>) -> ParamEstimate<T> {
    let r = params.radius();
    // radius was validated when `params` was built
    ParamEstimate::project(params.blocks().clone(), r).unwrap_or_else(|_| params.clone())
}

/// Settings of the box-constrained batch least-squares solve.
#[derive(Debug, Clone, Copy)]
pub struct ComparatorSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub jitter: f64,
}

impl Default for ComparatorSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100_000,
            jitter: 1e-12,
        }
    }
}

/// Best fixed coefficients in hindsight:
/// `argmin_{|α| ≤ radius} Σ_t ‖y_t − (1/M) α Φ_t‖²`.
///
/// `features` is `T × M` (one feature vector per row), `targets` is `T × d_h`.
/// Rows of `α` decouple, so each output dimension is solved separately: the
/// unconstrained solution is tried first (normal equations with a small
/// Tikhonov jitter, minimum-norm least squares if the Gram matrix is
/// singular); if it leaves the box, accelerated projected gradient finishes.
pub fn batch_comparator<T: Real>(
    features: &DMatrix<T>,
    targets: &DMatrix<T>,
    radius: T,
    settings: ComparatorSettings,
) -> Result<ParamEstimate<T>> {
    check_dim("comparator rows", features.nrows(), targets.nrows())?;
    if features.nrows() == 0 {
        return Err(Error::InvalidParameter(
            "comparator needs at least one observation".into(),
        ));
    }
    let m = features.ncols();
    let x = features * (T::one() / T::lit(m as f64));
    let gram = x.transpose() * &x;
    let lipschitz = T::lit(2.0) * SymmetricEigen::new(gram.clone()).eigenvalues.max().max(T::zero());
    let mut jittered = gram.clone();
    for i in 0..m {
        jittered[(i, i)] += T::lit(settings.jitter);
    }
    let chol = jittered.cholesky();

    let mut blocks = DMatrix::zeros(targets.ncols(), m);
    for r in 0..targets.ncols() {
        let y = targets.column(r).into_owned();
        let xty = x.transpose() * &y;
        let unconstrained = match &chol {
            Some(c) => c.solve(&xty),
            None => min_norm_solution(&x, &y),
        };
        let solution = if unconstrained.iter().all(|v| v.abs() <= radius) {
            unconstrained
        } else {
            projected_least_squares(&gram, &xty, unconstrained, radius, lipschitz, settings)
        };
        blocks.row_mut(r).copy_from(&solution.transpose());
    }
    ParamEstimate::project(blocks, radius)
}

fn min_norm_solution<T: Real>(x: &DMatrix<T>, y: &DVector<T>) -> DVector<T> {
    let svd = x.clone().svd(true, true);
    let eps = T::default_epsilon() * T::lit(x.nrows().max(x.ncols()) as f64) * svd.singular_values.max();
    svd.solve(y, eps).unwrap_or_else(|_| DVector::zeros(x.ncols()))
}

/// FISTA on `‖y − Xa‖²` with gradient `2(Gram a − Xᵀy)`.
fn projected_least_squares<T: Real>(
    gram: &DMatrix<T>,
    xty: &DVector<T>,
    start: DVector<T>,
    radius: T,
    lipschitz: T,
    settings: ComparatorSettings,
) -> DVector<T> {
    let clamp = |v: DVector<T>| v.map(|a| clamp_scalar(a, radius));
    let mut current = clamp(start);
    if !(lipschitz > T::zero()) {
        return current;
    }
    let step = T::one() / lipschitz;
    let mut momentum_point = current.clone();
    let mut t = T::one();
    let two = T::lit(2.0);
    let tol = T::lit(settings.tolerance);
    for _ in 0..settings.max_iterations {
        let grad = (gram * &momentum_point - xty) * two;
        let next = clamp(&momentum_point - grad * step);
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / two;
        let delta = &next - &current;
        momentum_point = &next + &delta * ((t - T::one()) / t_next);
        let change = delta.amax();
        current = next;
        t = t_next;
        if change <= tol * T::one().max(current.amax()) {
            break;
        }
    }
    current
}

/// `Σ_t l_t(α̂_t) − Σ_t l_t(α*)` with `α*` from [`batch_comparator`].
pub fn static_regret<T: Real>(
    online_losses: &[T],
    features: &DMatrix<T>,
    targets: &DMatrix<T>,
    radius: T,
) -> Result<T> {
    check_dim("online losses", features.nrows(), online_losses.len())?;
    let comparator = batch_comparator(features, targets, radius, ComparatorSettings::default())?;
    let comparator_loss = batch_loss(&comparator, features, targets)?;
    let online: T = online_losses.iter().fold(T::zero(), |a, b| a + *b);
    Ok(online - comparator_loss)
}

/// `Σ_t ‖y_t − (1/M) α Φ_t‖²` for fixed coefficients.
pub fn batch_loss<T: Real>(params: &ParamEstimate<T>, features: &DMatrix<T>, targets: &DMatrix<T>) -> Result<T> {
    check_dim("batch targets", params.output_dim(), targets.ncols())?;
    check_dim("batch features", params.count(), features.ncols())?;
    let inv_m = T::one() / T::lit(params.count() as f64);
    let predictions = features * params.blocks().transpose() * inv_m;
    Ok((targets - predictions).norm_squared())
}
