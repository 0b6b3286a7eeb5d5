//! Simulated control-affine plants.
//!
//! Every plant is a continuous model `ẋ = f(x) + g(x)u` discretized with one
//! classical RK4 step per control period. The disturbance the estimator learns
//! is the one-step residual against this discretized nominal map, so for the
//! mismatched cart-pole and the dragged quadrotor it exists only implicitly as
//! "truth step minus nominal step". Synthetic plants may instead carry an
//! explicit residual function `h(z)` added after the nominal step.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::scalar::{all_finite, Real};

const INPUT_SLACK: f64 = 1e-9;
const QUATERNION_TOL: f64 = 1e-6;

/// Continuous-time vector field `ẋ = F(x, u)`.
pub trait ContinuousDynamics<T>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn deriv(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T>;
}

/// Residual function `z ↦ h(z)` in discrete (per-step) units.
pub type DisturbanceFn<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;

/// One classical RK4 step with the input held constant.
pub fn rk4_step<T, F>(deriv: F, x: &DVector<T>, u: &DVector<T>, dt: T) -> Result<DVector<T>>
where
    T: Real,
    F: Fn(&DVector<T>, &DVector<T>) -> DVector<T>,
{
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive, got {}",
            dt.as_f64()
        )));
    }
    let half = dt / T::lit(2.0);
    let k1 = deriv(x, u);
    let k2 = deriv(&(x + &k1 * half), u);
    let k3 = deriv(&(x + &k2 * half), u);
    let k4 = deriv(&(x + &k3 * dt), u);
    let next = x + (k1 + (k2 + k3) * T::lit(2.0) + k4) * (dt / T::lit(6.0));
    if all_finite(&next) {
        Ok(next)
    } else {
        Err(Error::NumericalBlowUp)
    }
}

/// Linear feature extractor `z = S [x; u]`, with optional per-component
/// normalization folded into the rows of `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    selection: DMatrix<T>,
    state_dim: usize,
}

impl<T: Real> FeatureMap<T> {
    pub fn new(selection: DMatrix<T>, state_dim: usize) -> Result<Self> {
        if selection.ncols() < state_dim || selection.nrows() == 0 {
            return Err(Error::InvalidParameter("feature selection has the wrong shape".into()));
        }
        Ok(Self { selection, state_dim })
    }

    /// `z = [x; u]`.
    pub fn full(state_dim: usize, input_dim: usize) -> Self {
        let n = state_dim + input_dim;
        Self {
            selection: DMatrix::identity(n, n),
            state_dim,
        }
    }

    /// Divides feature component `i` by `scales[i]`.
    pub fn with_scales(mut self, scales: &[T]) -> Result<Self> {
        check_dim("feature scales", self.dim(), scales.len())?;
        for (i, s) in scales.iter().enumerate() {
            if !(*s > T::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "feature scale {i} must be positive, got {}",
                    s.as_f64()
                )));
            }
            let inv = T::one() / *s;
            self.selection.row_mut(i).scale_mut(inv);
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.selection.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.selection.ncols() - self.state_dim
    }

    pub fn extract(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        check_dim("feature state", self.state_dim, x.len())?;
        check_dim("feature input", self.input_dim(), u.len())?;
        let sx = self.selection.columns(0, self.state_dim);
        let su = self.selection.columns(self.state_dim, self.input_dim());
        Ok(sx * x + su * u)
    }

    /// `∂z/∂x`.
    pub fn state_jacobian(&self) -> DMatrix<T> {
        self.selection.columns(0, self.state_dim).into_owned()
    }

    /// `∂z/∂u`.
    pub fn input_jacobian(&self) -> DMatrix<T> {
        self.selection.columns(self.state_dim, self.input_dim()).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Gaussian,
    BoundedUniform,
}

/// Additive process noise: per-component std (gaussian) or half-width (uniform).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub scale: Vec<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            scale: Vec::new(),
            seed: 0,
        }
    }

    pub fn gaussian(scale: Vec<f64>, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            scale,
            seed,
        }
    }

    pub fn bounded_uniform(scale: Vec<f64>, seed: u64) -> Self {
        Self {
            kind: NoiseKind::BoundedUniform,
            scale,
            seed,
        }
    }

    pub fn is_none(&self) -> bool {
        self.kind == NoiseKind::None || self.scale.iter().all(|s| *s == 0.0)
    }

    /// Per-component scales broadcast to `dim` (a single entry is repeated).
    pub fn scales(&self, dim: usize) -> Result<Vec<f64>> {
        if self.kind == NoiseKind::None {
            return Ok(vec![0.0; dim]);
        }
        let scales = match self.scale.len() {
            1 => vec![self.scale[0]; dim],
            n if n == dim => self.scale.clone(),
            n => {
                return Err(Error::DimensionMismatch {
                    context: "noise scale",
                    expected: dim,
                    got: n,
                })
            }
        };
        if scales.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParameter("noise scale must be nonnegative".into()));
        }
        Ok(scales)
    }

    /// `Σ_i E[w_i²]`.
    pub fn total_variance(&self, dim: usize) -> Result<f64> {
        let scales = self.scales(dim)?;
        Ok(match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian => scales.iter().map(|s| s * s).sum(),
            NoiseKind::BoundedUniform => scales.iter().map(|s| s * s / 3.0).sum(),
        })
    }
}

/// Stateful sampler for a [`NoiseSpec`].
#[derive(Debug, Clone)]
pub struct NoiseSource {
    kind: NoiseKind,
    scales: Vec<f64>,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(spec: &NoiseSpec, dim: usize) -> Result<Self> {
        Self::with_rng(spec, dim, ChaCha8Rng::seed_from_u64(spec.seed))
    }

    pub fn with_rng(spec: &NoiseSpec, dim: usize, rng: ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            kind: spec.kind,
            scales: spec.scales(dim)?,
            rng,
        })
    }

    pub fn is_none(&self) -> bool {
        self.kind == NoiseKind::None
    }

    pub fn sample<T: Real>(&mut self) -> DVector<T> {
        let n = self.scales.len();
        match self.kind {
            NoiseKind::None => DVector::zeros(n),
            NoiseKind::Gaussian => DVector::from_fn(n, |i, _| {
                let g: f64 = self.rng.sample(StandardNormal);
                T::lit(g * self.scales[i])
            }),
            NoiseKind::BoundedUniform => DVector::from_fn(n, |i, _| {
                let s = self.scales[i];
                if s == 0.0 {
                    T::zero()
                } else {
                    T::lit(self.rng.random_range(-s..=s))
                }
            }),
        }
    }
}

/// A simulated control-affine system with its discretization, feature
/// extractor, and input box.
#[derive(Clone)]
pub struct PlantModel<T> {
    name: String,
    dynamics: Arc<dyn ContinuousDynamics<T>>,
    disturbance: Option<DisturbanceFn<T>>,
    features: FeatureMap<T>,
    input_lower: DVector<T>,
    input_upper: DVector<T>,
    dt: T,
    quaternion: Option<usize>,
    position: Range<usize>,
}

impl<T: fmt::Debug> fmt::Debug for PlantModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("name", &self.name)
            .field("state_dim", &self.features.state_dim)
            .field("input_dim", &self.input_lower.len())
            .field("feature_dim", &self.features.selection.nrows())
            .field("dt", &self.dt)
            .field("has_disturbance", &self.disturbance.is_some())
            .finish()
    }
}

impl<T: Real> PlantModel<T> {
    pub fn new(
        name: impl Into<String>,
        dynamics: Arc<dyn ContinuousDynamics<T>>,
        features: FeatureMap<T>,
        input_lower: DVector<T>,
        input_upper: DVector<T>,
        dt: T,
    ) -> Result<Self> {
        let (nx, nu) = (dynamics.state_dim(), dynamics.input_dim());
        check_dim("input lower bound", nu, input_lower.len())?;
        check_dim("input upper bound", nu, input_upper.len())?;
        check_dim("feature map inputs", nx + nu, features.selection.ncols())?;
        check_dim("feature map state split", nx, features.state_dim)?;
        if input_lower.iter().zip(input_upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidParameter(
                "input box needs lower < upper componentwise".into(),
            ));
        }
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "control period must be positive, got {}",
                dt.as_f64()
            )));
        }
        Ok(Self {
            name: name.into(),
            dynamics,
            disturbance: None,
            features,
            input_lower,
            input_upper,
            dt,
            quaternion: None,
            position: 0..0,
        })
    }

    /// Adds an explicit discrete residual `h(z)` on top of the RK4 step.
    pub fn with_disturbance(mut self, h: DisturbanceFn<T>) -> Self {
        self.disturbance = Some(h);
        self
    }

    /// Marks `x[offset..offset + 4]` as a unit quaternion (renormalized after
    /// every discrete step, validated on input).
    pub fn with_quaternion(mut self, offset: usize) -> Self {
        self.quaternion = Some(offset);
        self
    }

    /// State components that count as "position" for tracking metrics.
    pub fn with_position(mut self, position: Range<usize>) -> Self {
        self.position = position;
        self
    }

    pub fn with_feature_scales(mut self, scales: &[T]) -> Result<Self> {
        self.features = self.features.with_scales(scales)?;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }
    pub fn input_dim(&self) -> usize {
        self.dynamics.input_dim()
    }
    pub fn feature_dim(&self) -> usize {
        self.features.dim()
    }
    pub fn dt(&self) -> T {
        self.dt
    }
    pub fn input_lower(&self) -> &DVector<T> {
        &self.input_lower
    }
    pub fn input_upper(&self) -> &DVector<T> {
        &self.input_upper
    }
    pub fn feature_map(&self) -> &FeatureMap<T> {
        &self.features
    }
    pub fn position_dims(&self) -> Range<usize> {
        self.position.clone()
    }
    pub fn quaternion_offset(&self) -> Option<usize> {
        self.quaternion
    }
    pub fn has_disturbance(&self) -> bool {
        self.disturbance.is_some()
    }

    /// Continuous vector field `f(x) + g(x)u`.
    pub fn deriv(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        self.dynamics.deriv(x, u)
    }

    /// `f(x)`.
    pub fn drift(&self, x: &DVector<T>) -> DVector<T> {
        self.dynamics.deriv(x, &DVector::zeros(self.input_dim()))
    }

    /// `g(x)`, read off column by column from the control-affine structure.
    pub fn input_matrix(&self, x: &DVector<T>) -> DMatrix<T> {
        let f0 = self.drift(x);
        let nu = self.input_dim();
        let mut g = DMatrix::zeros(self.state_dim(), nu);
        for j in 0..nu {
            let mut e = DVector::zeros(nu);
            e[j] = T::one();
            g.set_column(j, &(self.dynamics.deriv(x, &e) - &f0));
        }
        g
    }

    pub fn features(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        self.features.extract(x, u)
    }

    /// Validates `u` against the box; clamps marginal violations (≤ 1e-9).
    pub fn admissible_input(&self, u: &DVector<T>) -> Result<DVector<T>> {
        check_dim("input", self.input_dim(), u.len())?;
        let slack = T::lit(INPUT_SLACK);
        let mut out = u.clone();
        for i in 0..u.len() {
            let (lo, hi, v) = (self.input_lower[i], self.input_upper[i], u[i]);
            if !v.is_finite_value() || v < lo - slack || v > hi + slack {
                return Err(Error::InputOutOfBounds {
                    index: i,
                    value: v.as_f64(),
                    lower: lo.as_f64(),
                    upper: hi.as_f64(),
                });
            }
            out[i] = v.max(lo).min(hi);
        }
        Ok(out)
    }

    /// Clamps `u` into the box.
    pub fn clamp_input(&self, u: &DVector<T>) -> DVector<T> {
        u.zip_zip_map(&self.input_lower, &self.input_upper, |v, lo, hi| v.max(lo).min(hi))
    }

    fn check_state(&self, x: &DVector<T>) -> Result<()> {
        check_dim("state", self.state_dim(), x.len())?;
        if !all_finite(x) {
            return Err(Error::NumericalBlowUp);
        }
        if let Some(o) = self.quaternion {
            let norm = x.rows(o, 4).norm().as_f64();
            if (norm - 1.0).abs() > QUATERNION_TOL {
                return Err(Error::InvalidQuaternion { norm });
            }
        }
        Ok(())
    }

    fn renormalize(&self, x: &mut DVector<T>) {
        if let Some(o) = self.quaternion {
            let n = x.rows(o, 4).norm();
            if n > T::zero() {
                x.rows_mut(o, 4).unscale_mut(n);
            }
        }
    }

    /// `x` with its quaternion block (if any) rescaled to unit norm.
    pub fn normalize_state(&self, x: &DVector<T>) -> DVector<T> {
        let mut out = x.clone();
        self.renormalize(&mut out);
        out
    }

    /// RK4 step of the plant's own continuous model without input or
    /// quaternion validation; used for finite-difference linearization.
    pub fn discrete_unchecked(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        let mut next = rk4_step(|x, u| self.dynamics.deriv(x, u), x, u, self.dt)?;
        self.renormalize(&mut next);
        Ok(next)
    }

    /// The discretized model `x⁺ = F(x, u)` (RK4 over one control period).
    pub fn nominal_discrete(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        self.check_state(x)?;
        let u = self.admissible_input(u)?;
        self.discrete_unchecked(x, &u)
    }

    /// Explicit residual `h(z)`, if the plant carries one.
    pub fn disturbance(&self, z: &DVector<T>) -> Option<DVector<T>> {
        self.disturbance.as_ref().map(|h| h(z))
    }

    /// `F(x, u) + h(z(x, u))`, no process noise.
    pub fn step_noise_free(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        let u = self.admissible_input(u)?;
        let mut next = self.nominal_discrete(x, &u)?;
        if let Some(h) = &self.disturbance {
            let z = self.features(x, &u)?;
            let d = h(&z);
            check_dim("disturbance output", self.state_dim(), d.len())?;
            next += d;
            self.renormalize(&mut next);
        }
        if all_finite(&next) {
            Ok(next)
        } else {
            Err(Error::NumericalBlowUp)
        }
    }

    /// `F(x, u) + h(z) + w` with `w` drawn from `noise`.
    pub fn step_truth(&self, noise: &mut NoiseSource, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        let mut next = self.step_noise_free(x, u)?;
        if noise.is_none() {
            return Ok(next);
        }
        let w: DVector<T> = noise.sample();
        if w.len() != next.len() {
            return Err(Error::DimensionMismatch {
                context: "noise sample",
                expected: next.len(),
                got: w.len(),
            });
        }
        next += w;
        self.renormalize(&mut next);
        Ok(next)
    }

    /// `x_next − F(x, u)`: the estimation target.
    pub fn observe_residual(&self, x: &DVector<T>, u: &DVector<T>, x_next: &DVector<T>) -> Result<DVector<T>> {
        check_dim("next state", self.state_dim(), x_next.len())?;
        Ok(x_next - self.nominal_discrete(x, u)?)
    }
}

// ---------------------------------------------------------------------------
// Linear test plant

/// `ẋ = A x + B u`.
#[derive(Debug, Clone)]
pub struct LinearDynamics<T> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
}

impl<T: Real> ContinuousDynamics<T> for LinearDynamics<T> {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn deriv(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        &self.a * x + &self.b * u
    }
}

// ---------------------------------------------------------------------------
// Cart-pole

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams<T> {
    pub cart_mass: T,
    pub pole_mass: T,
    pub half_length: T,
    pub gravity: T,
}

impl<T: Real> Default for CartPoleParams<T> {
    fn default() -> Self {
        Self {
            cart_mass: T::lit(1.0),
            pole_mass: T::lit(0.1),
            half_length: T::lit(0.5),
            gravity: T::lit(9.81),
        }
    }
}

impl<T: Real> CartPoleParams<T> {
    fn validate(&self) -> Result<()> {
        let ok = [self.cart_mass, self.pole_mass, self.half_length, self.gravity]
            .iter()
            .all(|v| *v > T::zero());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("cart-pole parameters must be positive".into()))
        }
    }

    /// Scales masses and pole length; gravity is a physical constant and stays.
    pub fn scaled(&self, s: T) -> Self {
        Self {
            cart_mass: self.cart_mass * s,
            pole_mass: self.pole_mass * s,
            half_length: self.half_length * s,
            gravity: self.gravity,
        }
    }
}

/// Period, force bound, and feature normalization shared by both cart-pole models.
#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleSetup<T> {
    pub dt: T,
    pub force_limit: T,
    pub feature_scales: Option<Vec<T>>,
}

impl<T: Real> Default for CartPoleSetup<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(1.0 / 15.0),
            force_limit: T::lit(30.0),
            feature_scales: None,
        }
    }
}

/// State `(x, ẋ, θ, θ̇)` with `θ` measured from upright; input force `F`.
#[derive(Debug, Clone)]
pub struct CartPoleDynamics<T> {
    pub params: CartPoleParams<T>,
}

impl<T: Real> ContinuousDynamics<T> for CartPoleDynamics<T> {
    fn state_dim(&self) -> usize {
        4
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn deriv(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let p = &self.params;
        let (xdot, theta, thetadot, force) = (x[1], x[2], x[3], u[0]);
        let (s, c) = theta.sin_cos();
        let total = p.cart_mass + p.pole_mass;
        let pml = p.pole_mass * p.half_length;
        let thetaddot = (p.gravity * s + c * ((-force - pml * thetadot * thetadot * s) / total))
            / (p.half_length * (T::lit(4.0 / 3.0) - p.pole_mass * c * c / total));
        let xddot = (pml * (thetadot * thetadot * s - thetaddot * c) + force) / total;
        DVector::from_vec(vec![xdot, xddot, thetadot, thetaddot])
    }
}

/// Truth plant with `params_true` and a nominal plant whose masses and length
/// are scaled by `nominal_scale`. Both use `z = [x; u]`.
pub fn make_cartpole<T: Real>(
    params_true: CartPoleParams<T>,
    nominal_scale: T,
    setup: &CartPoleSetup<T>,
) -> Result<(PlantModel<T>, PlantModel<T>)> {
    params_true.validate()?;
    if !(nominal_scale > T::zero() && nominal_scale <= T::one()) {
        return Err(Error::InvalidParameter(format!(
            "nominal scale must lie in (0, 1], got {}",
            nominal_scale.as_f64()
        )));
    }
    if !(setup.force_limit > T::zero()) {
        return Err(Error::InvalidParameter("cart-pole force limit must be positive".into()));
    }
    let build = |name: &str, params: CartPoleParams<T>| -> Result<PlantModel<T>> {
        let mut features = FeatureMap::full(4, 1);
        if let Some(scales) = &setup.feature_scales {
            features = features.with_scales(scales)?;
        }
        let plant = PlantModel::new(
            name,
            Arc::new(CartPoleDynamics { params }),
            features,
            DVector::from_element(1, -setup.force_limit),
            DVector::from_element(1, setup.force_limit),
            setup.dt,
        )?;
        Ok(plant.with_position(0..1))
    };
    let truth = build("cartpole-truth", params_true)?;
    let nominal = build("cartpole-nominal", params_true.scaled(nominal_scale))?;
    Ok((truth, nominal))
}

// ---------------------------------------------------------------------------
// Quadrotor

#[derive(Debug, Clone, PartialEq)]
pub struct QuadrotorParams<T> {
    pub mass: T,
    pub gravity: Vector3<T>,
    /// Linear body-frame drag coefficients (N·s/m).
    pub drag: Matrix3<T>,
    pub thrust_min: T,
    pub thrust_max: T,
    pub rate_limit: T,
    pub dt: T,
    pub feature_scales: Option<Vec<T>>,
}

impl<T: Real> Default for QuadrotorParams<T> {
    fn default() -> Self {
        let mass = T::lit(0.68);
        let g = T::lit(9.81);
        Self {
            mass,
            gravity: Vector3::new(T::zero(), T::zero(), -g),
            drag: Matrix3::identity() * T::lit(0.3),
            thrust_min: T::zero(),
            thrust_max: T::lit(2.0) * mass * g,
            rate_limit: T::lit(3.0),
            dt: T::lit(0.02),
            feature_scales: None,
        }
    }
}

impl<T: Real> QuadrotorParams<T> {
    pub fn hover_thrust(&self) -> T {
        self.mass * self.gravity.norm()
    }
}

/// Body-to-world rotation of a `(w, x, y, z)` quaternion.
pub fn rotation_matrix<T: Real>(q: &[T; 4]) -> Matrix3<T> {
    let [w, x, y, z] = *q;
    let one = T::one();
    let two = T::lit(2.0);
    Matrix3::new(
        one - two * (y * y + z * z),
        two * (x * y - w * z),
        two * (x * z + w * y),
        two * (x * y + w * z),
        one - two * (x * x + z * z),
        two * (y * z - w * x),
        two * (x * z - w * y),
        two * (y * z + w * x),
        one - two * (x * x + y * y),
    )
}

/// State `(p, v, q)` in `R^10`, input `(T, ω)` in `R^4`. Body rates are
/// tracked instantaneously by an idealized inner loop.
#[derive(Debug, Clone)]
pub struct QuadrotorDynamics<T> {
    pub mass: T,
    pub gravity: Vector3<T>,
    pub drag: Option<Matrix3<T>>,
}

impl<T: Real> QuadrotorDynamics<T> {
    /// `f_a = −R D Rᵀ v`, zero when drag is disabled.
    pub fn drag_force(&self, q: &[T; 4], v: &Vector3<T>) -> Vector3<T> {
        match &self.drag {
            Some(d) => {
                let r = rotation_matrix(q);
                -(r * d * r.transpose() * v)
            }
            None => Vector3::zeros(),
        }
    }
}

impl<T: Real> ContinuousDynamics<T> for QuadrotorDynamics<T> {
    fn state_dim(&self) -> usize {
        10
    }
    fn input_dim(&self) -> usize {
        4
    }
    fn deriv(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let v = Vector3::new(x[3], x[4], x[5]);
        let q = [x[6], x[7], x[8], x[9]];
        let (thrust, wx, wy, wz) = (u[0], u[1], u[2], u[3]);
        let r = rotation_matrix(&q);
        let accel = self.gravity + r.column(2) * (thrust / self.mass) + self.drag_force(&q, &v) / self.mass;
        let half = T::lit(0.5);
        let [qw, qx, qy, qz] = q;
        // ½ q ⊗ (0, ω)
        let qdot = [
            half * (-qx * wx - qy * wy - qz * wz),
            half * (qw * wx + qy * wz - qz * wy),
            half * (qw * wy + qz * wx - qx * wz),
            half * (qw * wz + qx * wy - qy * wx),
        ];
        DVector::from_vec(vec![
            v.x, v.y, v.z, accel.x, accel.y, accel.z, qdot[0], qdot[1], qdot[2], qdot[3],
        ])
    }
}

/// Quadrotor truth (with linear drag when `drag_on`) and drag-free nominal.
/// Features are `z = [v; q; ω; T/T_max]`.
pub fn make_quadrotor<T: Real>(params: &QuadrotorParams<T>, drag_on: bool) -> Result<(PlantModel<T>, PlantModel<T>)> {
    if !(params.mass > T::zero()) {
        return Err(Error::InvalidParameter("quadrotor mass must be positive".into()));
    }
    let sym = (params.drag - params.drag.transpose()).amax();
    let eig = nalgebra::SymmetricEigen::new((params.drag + params.drag.transpose()) * T::lit(0.5)).eigenvalues;
    if sym > T::lit(1e-12) || eig.iter().any(|e| *e < T::lit(-1e-12)) {
        return Err(Error::InvalidParameter(
            "drag matrix must be symmetric positive semidefinite".into(),
        ));
    }
    if !(params.thrust_max > params.thrust_min) || !(params.rate_limit > T::zero()) {
        return Err(Error::InvalidParameter("quadrotor input bounds are empty".into()));
    }
    let mut selection = DMatrix::zeros(11, 14);
    for i in 0..7 {
        selection[(i, 3 + i)] = T::one(); // v, q
    }
    for i in 0..3 {
        selection[(7 + i, 11 + i)] = T::one(); // ω
    }
    selection[(10, 10)] = T::one() / params.thrust_max;
    let mut features = FeatureMap::new(selection, 10)?;
    if let Some(scales) = &params.feature_scales {
        features = features.with_scales(scales)?;
    }
    let lower = DVector::from_vec(vec![
        params.thrust_min,
        -params.rate_limit,
        -params.rate_limit,
        -params.rate_limit,
    ]);
    let upper = DVector::from_vec(vec![
        params.thrust_max,
        params.rate_limit,
        params.rate_limit,
        params.rate_limit,
    ]);
    let build = |name: &str, drag: Option<Matrix3<T>>| -> Result<PlantModel<T>> {
        let dynamics = QuadrotorDynamics {
            mass: params.mass,
            gravity: params.gravity,
            drag,
        };
        Ok(PlantModel::new(
            name,
            Arc::new(dynamics),
            features.clone(),
            lower.clone(),
            upper.clone(),
            params.dt,
        )?
        .with_quaternion(6)
        .with_position(0..3))
    };
    let truth = build("quadrotor-truth", drag_on.then_some(params.drag))?;
    let nominal = build("quadrotor-nominal", None)?;
    Ok((truth, nominal))
}

// ---------------------------------------------------------------------------
// References

/// Horizontal closed path with a linear speed ramp from rest.
#[derive(Debug, Clone, PartialEq)]
pub struct PathParams<T> {
    pub center: Vector3<T>,
    pub radius: T,
    pub max_speed: T,
    pub ramp_time: T,
    pub hover_thrust: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceTrajectory<T> {
    Setpoint {
        state: DVector<T>,
        input: DVector<T>,
    },
    /// `p = c + r (cos φ, sin φ, 0)`.
    Circle(PathParams<T>),
    /// Gerono lemniscate `p = c + (r sin φ, r sin φ cos φ, 0)`.
    Lemniscate(PathParams<T>),
}

impl<T: Real> PathParams<T> {
    /// Phase `φ(t)` and rate `φ̇(t)` with `φ̇` ramped linearly to `v_m / r`.
    fn phase(&self, t: T) -> (T, T) {
        let rate = self.max_speed / self.radius;
        if self.ramp_time <= T::zero() {
            return (rate * t, rate);
        }
        if t <= self.ramp_time {
            (rate * t * t / (T::lit(2.0) * self.ramp_time), rate * t / self.ramp_time)
        } else {
            (rate * self.ramp_time / T::lit(2.0) + rate * (t - self.ramp_time), rate)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.radius > T::zero() && self.max_speed >= T::zero() && self.ramp_time >= T::zero() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "path needs positive radius and nonnegative speed and ramp".into(),
            ))
        }
    }

    fn state(&self, p: Vector3<T>, v: Vector3<T>) -> (DVector<T>, DVector<T>) {
        let o = T::zero();
        let x = DVector::from_vec(vec![p.x, p.y, p.z, v.x, v.y, v.z, T::one(), o, o, o]);
        let u = DVector::from_vec(vec![self.hover_thrust, o, o, o]);
        (x, u)
    }
}

impl<T: Real> ReferenceTrajectory<T> {
    /// `(x_ref(t), u_ref(t))`.
    pub fn at(&self, t: T) -> Result<(DVector<T>, DVector<T>)> {
        if !(t >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "reference time must be nonnegative, got {}",
                t.as_f64()
            )));
        }
        match self {
            ReferenceTrajectory::Setpoint { state, input } => Ok((state.clone(), input.clone())),
            ReferenceTrajectory::Circle(path) => {
                path.validate()?;
                let (phi, rate) = path.phase(t);
                let (s, c) = phi.sin_cos();
                let r = path.radius;
                let p = path.center + Vector3::new(r * c, r * s, T::zero());
                let v = Vector3::new(-r * rate * s, r * rate * c, T::zero());
                Ok(path.state(p, v))
            }
            ReferenceTrajectory::Lemniscate(path) => {
                path.validate()?;
                let (phi, rate) = path.phase(t);
                let (s, c) = phi.sin_cos();
                let r = path.radius;
                let p = path.center + Vector3::new(r * s, r * s * c, T::zero());
                let c2 = (phi * T::lit(2.0)).cos();
                let v = Vector3::new(r * rate * c, r * rate * c2, T::zero());
                Ok(path.state(p, v))
            }
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            ReferenceTrajectory::Setpoint { state, .. } => state.len(),
            _ => 10,
        }
    }
}
