//! Receding-horizon control of the learned-model dynamics.
//!
//! The horizon-`N` tracking problem is solved with iLQR: a regularized
//! Riccati-like backward pass on the linearized dynamics followed by a
//! line-searched forward rollout whose inputs are clamped into the box. The
//! backward pass freezes input components that a full step would push past
//! their bound (one projected-Newton pass), so saturated inputs do not stall
//! the line search.
//!
//! [`AugmentedDynamics`] is the nominal discrete map plus the random-feature
//! estimate evaluated at the predicted `(x_k, u_k)` of every stage;
//! [`TrueDynamics`] is the noise-free truth map used by the clairvoyant
//! controller.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::plants::PlantModel;
use crate::rff::{FeatureSet, ParamEstimate};
use crate::scalar::{all_finite, Real};

/// Discrete map `x⁺ = F(x, u)` with a linearization.
pub trait DiscreteDynamics<T: Real> {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>>;

    /// `(∂F/∂x, ∂F/∂u)`; central differences of [`step`](Self::step) by default.
    fn linearize(&self, x: &DVector<T>, u: &DVector<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
        finite_difference_jacobians(|x, u| self.step(x, u), x, u)
    }
}

/// Central differences with per-coordinate step `h·max(1, |v|)`.
pub fn finite_difference_jacobians<T, F>(f: F, x: &DVector<T>, u: &DVector<T>) -> Result<(DMatrix<T>, DMatrix<T>)>
where
    T: Real,
    F: Fn(&DVector<T>, &DVector<T>) -> Result<DVector<T>>,
{
    let base = T::lit(T::FD_STEP);
    let nx = x.len();
    let nu = u.len();
    let mut a = DMatrix::zeros(nx, nx);
    let mut b = DMatrix::zeros(nx, nu);
    let two = T::lit(2.0);
    for j in 0..nx {
        let h = base * T::one().max(x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp, u)? - f(&xm, u)?) / (two * h);
        a.set_column(j, &col);
    }
    for j in 0..nu {
        let h = base * T::one().max(u[j].abs());
        let mut up = u.clone();
        let mut um = u.clone();
        up[j] += h;
        um[j] -= h;
        let col = (f(x, &up)? - f(x, &um)?) / (two * h);
        b.set_column(j, &col);
    }
    Ok((a, b))
}

/// The live disturbance model `ĥ(z) = (1/M) α̂ Φ(z)`.
#[derive(Debug, Clone, Copy)]
pub struct LearnedModel<'a, T> {
    pub features: &'a FeatureSet<T>,
    pub params: &'a ParamEstimate<T>,
}

/// `F_nominal(x, u) + ĥ(z(x, u))`.
#[derive(Debug, Clone, Copy)]
pub struct AugmentedDynamics<'a, T> {
    plant: &'a PlantModel<T>,
    learned: Option<LearnedModel<'a, T>>,
}

impl<'a, T: Real> AugmentedDynamics<'a, T> {
    pub fn nominal(plant: &'a PlantModel<T>) -> Self {
        Self { plant, learned: None }
    }

    pub fn new(plant: &'a PlantModel<T>, features: &'a FeatureSet<T>, params: &'a ParamEstimate<T>) -> Result<Self> {
        check_dim("learned model features", plant.feature_dim(), features.input_dim())?;
        check_dim("learned model outputs", plant.state_dim(), params.output_dim())?;
        check_dim("learned model coefficients", features.count(), params.count())?;
        Ok(Self {
            plant,
            learned: Some(LearnedModel { features, params }),
        })
    }

    pub fn plant(&self) -> &PlantModel<T> {
        self.plant
    }

    /// `ĥ(z(x, u))`, or `None` when the model is absent or identically zero.
    pub fn estimate(&self, x: &DVector<T>, u: &DVector<T>) -> Result<Option<DVector<T>>> {
        match &self.learned {
            Some(m) if !m.params.is_zero() => {
                let z = self.plant.features(x, u)?;
                Ok(Some(m.features.predict(m.params, &z)?))
            }
            _ => Ok(None),
        }
    }

    fn step_unchecked(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        let mut next = self.plant.discrete_unchecked(x, u)?;
        if let Some(h) = self.estimate(x, u)? {
            next += h;
        }
        Ok(next)
    }

    /// `(∂ĥ/∂x, ∂ĥ/∂u)` through `z = S [x; u]`, analytic.
    pub fn estimate_jacobians(&self, x: &DVector<T>, u: &DVector<T>) -> Result<Option<(DMatrix<T>, DMatrix<T>)>> {
        match &self.learned {
            Some(m) if !m.params.is_zero() => {
                let map = self.plant.feature_map();
                let z = map.extract(x, u)?;
                let inv_m = T::one() / T::lit(m.features.count() as f64);
                let dh_dz = m.params.blocks() * m.features.jacobian(&z)? * inv_m;
                Ok(Some((&dh_dz * map.state_jacobian(), &dh_dz * map.input_jacobian())))
            }
            _ => Ok(None),
        }
    }
}

impl<T: Real> DiscreteDynamics<T> for AugmentedDynamics<'_, T> {
    fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }
    fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }

    fn step(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        check_dim("state", self.state_dim(), x.len())?;
        let u = self.plant.admissible_input(u)?;
        let next = self.step_unchecked(x, &u)?;
        if all_finite(&next) {
            Ok(next)
        } else {
            Err(Error::NumericalBlowUp)
        }
    }

    fn linearize(&self, x: &DVector<T>, u: &DVector<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
        let (mut a, mut b) = finite_difference_jacobians(|x, u| self.plant.discrete_unchecked(x, u), x, u)?;
        if let Some((hx, hu)) = self.estimate_jacobians(x, u)? {
            a += hx;
            b += hu;
        }
        Ok((a, b))
    }
}

/// Noise-free truth map `F_truth(x, u) + h(z)`: what a controller that knows
/// the disturbance would predict.
#[derive(Debug, Clone, Copy)]
pub struct TrueDynamics<'a, T> {
    plant: &'a PlantModel<T>,
}

impl<'a, T: Real> TrueDynamics<'a, T> {
    pub fn new(plant: &'a PlantModel<T>) -> Self {
        Self { plant }
    }

    fn step_unchecked(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        let mut next = self.plant.discrete_unchecked(x, u)?;
        let z = self.plant.features(x, u)?;
        if let Some(h) = self.plant.disturbance(&z) {
            next += h;
        }
        Ok(next)
    }
}

impl<T: Real> DiscreteDynamics<T> for TrueDynamics<'_, T> {
    fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }
    fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }
    fn step(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        check_dim("state", self.state_dim(), x.len())?;
        let u = self.plant.admissible_input(u)?;
        let next = self.step_unchecked(x, &u)?;
        if all_finite(&next) {
            Ok(next)
        } else {
            Err(Error::NumericalBlowUp)
        }
    }
    fn linearize(&self, x: &DVector<T>, u: &DVector<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
        finite_difference_jacobians(|x, u| self.step_unchecked(x, u), x, u)
    }
}

/// Quadratic tracking weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec<T> {
    q: DMatrix<T>,
    r: DMatrix<T>,
    q_terminal: DMatrix<T>,
}

const EIG_TOL: f64 = 1e-10;

fn check_symmetric<T: Real>(name: &str, m: &DMatrix<T>, positive_definite: bool) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidParameter(format!("{name} must be square")));
    }
    let scale = T::one().max(m.amax());
    if (m - m.transpose()).amax() > T::lit(EIG_TOL) * scale {
        return Err(Error::InvalidParameter(format!("{name} must be symmetric")));
    }
    let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
    let ok = if positive_definite {
        min_eig > T::lit(EIG_TOL)
    } else {
        min_eig >= -T::lit(EIG_TOL)
    };
    if ok {
        Ok(())
    } else {
        let kind = if positive_definite {
            "positive definite"
        } else {
            "positive semidefinite"
        };
        Err(Error::InvalidParameter(format!(
            "{name} must be {kind} (smallest eigenvalue {})",
            min_eig.as_f64()
        )))
    }
}

impl<T: Real> CostSpec<T> {
    /// `q_terminal` defaults to `q`.
    pub fn new(q: DMatrix<T>, r: DMatrix<T>, q_terminal: Option<DMatrix<T>>) -> Result<Self> {
        let q_terminal = q_terminal.unwrap_or_else(|| q.clone());
        check_symmetric("Q", &q, false)?;
        check_symmetric("R", &r, true)?;
        check_symmetric("Q_terminal", &q_terminal, false)?;
        check_dim("Q_terminal", q.nrows(), q_terminal.nrows())?;
        Ok(Self { q, r, q_terminal })
    }

    pub fn diagonal(q: &[T], r: &[T], q_terminal: Option<&[T]>) -> Result<Self> {
        let diag = |v: &[T]| DMatrix::from_diagonal(&DVector::from_column_slice(v));
        Self::new(diag(q), diag(r), q_terminal.map(diag))
    }

    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<T> {
        &self.r
    }
    pub fn q_terminal(&self) -> &DMatrix<T> {
        &self.q_terminal
    }
    pub fn state_dim(&self) -> usize {
        self.q.nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.r.nrows()
    }

    /// `eᵀQe + vᵀRv` with `e = x − x_ref`, `v = u − u_ref`.
    pub fn stage(&self, x: &DVector<T>, u: &DVector<T>, x_ref: &DVector<T>, u_ref: &DVector<T>) -> T {
        let e = x - x_ref;
        let v = u - u_ref;
        quad_form(&self.q, &e) + quad_form(&self.r, &v)
    }

    pub fn terminal(&self, x: &DVector<T>, x_ref: &DVector<T>) -> T {
        quad_form(&self.q_terminal, &(x - x_ref))
    }
}

fn quad_form<T: Real>(m: &DMatrix<T>, v: &DVector<T>) -> T {
    v.dot(&(m * v))
}

/// Solver knobs. Defaults: 50 iterations, relative tolerance 1e-6,
/// Levenberg–Marquardt `μ` from 1e-6 (×10 on failure, ÷2 on success, cap
/// 1e6), line-search scales `2^0 … 2^-10`, Armijo coefficient 1e-4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub mu_init: f64,
    pub mu_max: f64,
    pub line_search_steps: usize,
    pub armijo: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-6,
            mu_init: 1e-6,
            mu_max: 1e6,
            line_search_steps: 11,
            armijo: 1e-4,
        }
    }
}

/// Horizon-`N` tracking problem over a discrete model.
#[derive(Debug, Clone)]
pub struct MpcProblem<'a, T, D> {
    pub horizon: usize,
    pub dynamics: D,
    pub cost: &'a CostSpec<T>,
    /// `N + 1` reference pairs; the input of the last one is unused.
    pub references: Vec<(DVector<T>, DVector<T>)>,
    pub input_lower: DVector<T>,
    pub input_upper: DVector<T>,
    pub settings: SolverSettings,
}

impl<'a, T: Real, D: DiscreteDynamics<T>> MpcProblem<'a, T, D> {
    pub fn new(
        horizon: usize,
        dynamics: D,
        cost: &'a CostSpec<T>,
        references: Vec<(DVector<T>, DVector<T>)>,
        input_lower: DVector<T>,
        input_upper: DVector<T>,
        settings: SolverSettings,
    ) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidParameter(format!(
                "horizon must be at least 2, got {horizon}"
            )));
        }
        let (nx, nu) = (dynamics.state_dim(), dynamics.input_dim());
        check_dim("cost state weight", nx, cost.state_dim())?;
        check_dim("cost input weight", nu, cost.input_dim())?;
        check_dim("reference length", horizon + 1, references.len())?;
        for (xr, ur) in &references {
            check_dim("reference state", nx, xr.len())?;
            check_dim("reference input", nu, ur.len())?;
        }
        check_dim("input lower bound", nu, input_lower.len())?;
        check_dim("input upper bound", nu, input_upper.len())?;
        Ok(Self {
            horizon,
            dynamics,
            cost,
            references,
            input_lower,
            input_upper,
            settings,
        })
    }

    /// Problem over the box of `plant` with the references shifted to `offset`.
    pub fn for_plant(
        horizon: usize,
        dynamics: D,
        cost: &'a CostSpec<T>,
        references: Vec<(DVector<T>, DVector<T>)>,
        plant: &PlantModel<T>,
        settings: SolverSettings,
    ) -> Result<Self> {
        Self::new(
            horizon,
            dynamics,
            cost,
            references,
            plant.input_lower().clone(),
            plant.input_upper().clone(),
            settings,
        )
    }

    fn clamp(&self, u: &DVector<T>) -> DVector<T> {
        u.zip_zip_map(&self.input_lower, &self.input_upper, |v, lo, hi| v.max(lo).min(hi))
    }

    /// Reference inputs clamped into the box.
    pub fn reference_inputs(&self) -> Vec<DVector<T>> {
        self.references[..self.horizon]
            .iter()
            .map(|(_, u)| self.clamp(u))
            .collect()
    }

    /// Objective of given state and input sequences.
    pub fn objective(&self, states: &[DVector<T>], inputs: &[DVector<T>]) -> T {
        let mut total = T::zero();
        for k in 0..self.horizon {
            let (xr, ur) = &self.references[k];
            total += self.cost.stage(&states[k], &inputs[k], xr, ur);
        }
        total
            + self
                .cost
                .terminal(&states[self.horizon], &self.references[self.horizon].0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution<T> {
    pub inputs: Vec<DVector<T>>,
    pub states: Vec<DVector<T>>,
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after the warm start and after every accepted iteration.
    pub objective_history: Vec<T>,
}

/// Forward simulation and its objective.
pub fn rollout<T: Real, D: DiscreteDynamics<T>>(
    problem: &MpcProblem<'_, T, D>,
    x0: &DVector<T>,
    inputs: &[DVector<T>],
) -> Result<(Vec<DVector<T>>, T)> {
    check_dim("input sequence", problem.horizon, inputs.len())?;
    check_dim("initial state", problem.dynamics.state_dim(), x0.len())?;
    let slack = T::lit(1e-12);
    for u in inputs {
        check_dim("input", problem.dynamics.input_dim(), u.len())?;
        for i in 0..u.len() {
            let (lo, hi) = (problem.input_lower[i], problem.input_upper[i]);
            if !(u[i] >= lo - slack && u[i] <= hi + slack) {
                return Err(Error::InputOutOfBounds {
                    index: i,
                    value: u[i].as_f64(),
                    lower: lo.as_f64(),
                    upper: hi.as_f64(),
                });
            }
        }
    }
    let mut states = Vec::with_capacity(problem.horizon + 1);
    states.push(x0.clone());
    for (k, u) in inputs.iter().enumerate() {
        let next = problem
            .dynamics
            .step(&states[k], u)
            .map_err(|_| Error::NonFiniteRollout { step: k })?;
        if !all_finite(&next) {
            return Err(Error::NonFiniteRollout { step: k });
        }
        states.push(next);
    }
    let objective = problem.objective(&states, inputs);
    if !objective.is_finite_value() {
        return Err(Error::NonFiniteRollout { step: problem.horizon });
    }
    Ok((states, objective))
}

struct Gains<T> {
    feedforward: Vec<DVector<T>>,
    feedback: Vec<DMatrix<T>>,
    /// `Σ kᵀQ_u` and `Σ kᵀQ_uu k`.
    linear: T,
    quadratic: T,
}

fn backward_pass<T: Real, D: DiscreteDynamics<T>>(
    problem: &MpcProblem<'_, T, D>,
    states: &[DVector<T>],
    inputs: &[DVector<T>],
    jacobians: &[(DMatrix<T>, DMatrix<T>)],
    mu: T,
) -> Option<Gains<T>> {
    let n = problem.horizon;
    let nu = problem.dynamics.input_dim();
    let two = T::lit(2.0);
    let cost = problem.cost;
    let mut v_x = cost.q_terminal() * (&states[n] - &problem.references[n].0) * two;
    let mut v_xx = cost.q_terminal() * two;
    let mut feedforward = vec![DVector::zeros(nu); n];
    let mut feedback = vec![DMatrix::zeros(nu, problem.dynamics.state_dim()); n];
    let mut linear = T::zero();
    let mut quadratic = T::zero();

    for k in (0..n).rev() {
        let (a, b) = &jacobians[k];
        let (xr, ur) = &problem.references[k];
        let l_x = cost.q() * (&states[k] - xr) * two;
        let l_u = cost.r() * (&inputs[k] - ur) * two;
        let q_x = l_x + a.transpose() * &v_x;
        let q_u = l_u + b.transpose() * &v_x;
        let vb = &v_xx * b;
        let q_xx = cost.q() * two + a.transpose() * &v_xx * a;
        let q_uu = cost.r() * two + b.transpose() * &vb;
        let q_ux = vb.transpose() * a;

        let mut q_uu_reg = q_uu.clone();
        for i in 0..nu {
            q_uu_reg[(i, i)] += mu;
        }
        let chol = q_uu_reg.clone().cholesky()?;
        let mut k_ff = -chol.solve(&q_u);
        let mut k_fb = -chol.solve(&q_ux);

        // freeze components a full step would push out of the box
        let clamped: Vec<bool> = (0..nu)
            .map(|i| {
                let target = inputs[k][i] + k_ff[i];
                target < problem.input_lower[i] || target > problem.input_upper[i]
            })
            .collect();
        if clamped.iter().any(|c| *c) {
            let free: Vec<usize> = (0..nu).filter(|i| !clamped[*i]).collect();
            for i in 0..nu {
                if clamped[i] {
                    let target = (inputs[k][i] + k_ff[i])
                        .max(problem.input_lower[i])
                        .min(problem.input_upper[i]);
                    k_ff[i] = target - inputs[k][i];
                    k_fb.row_mut(i).fill(T::zero());
                }
            }
            if !free.is_empty() {
                let nf = free.len();
                let q_ff = DMatrix::from_fn(nf, nf, |r, c| q_uu_reg[(free[r], free[c])]);
                let mut rhs = DVector::from_fn(nf, |r, _| q_u[free[r]]);
                for (r, &fi) in free.iter().enumerate() {
                    for j in 0..nu {
                        if clamped[j] {
                            rhs[r] += q_uu_reg[(fi, j)] * k_ff[j];
                        }
                    }
                }
                let q_fx = DMatrix::from_fn(nf, q_ux.ncols(), |r, c| q_ux[(free[r], c)]);
                let chol_f = q_ff.cholesky()?;
                let kf = -chol_f.solve(&rhs);
                let kfb = -chol_f.solve(&q_fx);
                for (r, &fi) in free.iter().enumerate() {
                    k_ff[fi] = kf[r];
                    k_fb.set_row(fi, &kfb.row(r));
                }
            }
        }

        linear += k_ff.dot(&q_u);
        quadratic += k_ff.dot(&(&q_uu * &k_ff));

        let kt = k_fb.transpose();
        v_x = &q_x + &kt * (&q_uu * &k_ff) + &kt * &q_u + q_ux.transpose() * &k_ff;
        v_xx = &q_xx + &kt * &q_uu * &k_fb + &kt * &q_ux + q_ux.transpose() * &k_fb;
        v_xx = (&v_xx + v_xx.transpose()) * T::lit(0.5);
        if !all_finite(&v_x) {
            return None;
        }
        feedforward[k] = k_ff;
        feedback[k] = k_fb;
    }
    Some(Gains {
        feedforward,
        feedback,
        linear,
        quadratic,
    })
}

/// States, inputs and objective of a line-search candidate.
type Candidate<T> = (Vec<DVector<T>>, Vec<DVector<T>>, T);

fn forward_pass<T: Real, D: DiscreteDynamics<T>>(
    problem: &MpcProblem<'_, T, D>,
    states: &[DVector<T>],
    inputs: &[DVector<T>],
    gains: &Gains<T>,
    alpha: T,
) -> Result<Candidate<T>> {
    let n = problem.horizon;
    let mut new_states = Vec::with_capacity(n + 1);
    let mut new_inputs = Vec::with_capacity(n);
    new_states.push(states[0].clone());
    for k in 0..n {
        let dx = &new_states[k] - &states[k];
        let u = &inputs[k] + &gains.feedforward[k] * alpha + &gains.feedback[k] * dx;
        let u = problem.clamp(&u);
        let next = problem
            .dynamics
            .step(&new_states[k], &u)
            .map_err(|_| Error::NonFiniteRollout { step: k })?;
        new_states.push(next);
        new_inputs.push(u);
    }
    let objective = problem.objective(&new_states, &new_inputs);
    if !objective.is_finite_value() {
        return Err(Error::NonFiniteRollout { step: n });
    }
    Ok((new_states, new_inputs, objective))
}

/// iLQR from `warm_start` (reference inputs when absent).
///
/// Accepted iterates never increase the objective. If no rollout from the
/// warm start or the zero input is finite, the rollout error is returned.
pub fn solve<T: Real, D: DiscreteDynamics<T>>(
    problem: &MpcProblem<'_, T, D>,
    x0: &DVector<T>,
    warm_start: Option<&[DVector<T>]>,
) -> Result<MpcSolution<T>> {
    if !all_finite(x0) {
        return Err(Error::NonFiniteRollout { step: 0 });
    }
    let settings = problem.settings;
    let mut inputs: Vec<DVector<T>> = match warm_start {
        Some(ws) => {
            check_dim("warm start", problem.horizon, ws.len())?;
            ws.iter().map(|u| problem.clamp(u)).collect()
        }
        None => problem.reference_inputs(),
    };
    let (mut states, mut objective) = match rollout(problem, x0, &inputs) {
        Ok(r) => r,
        Err(first) => {
            let zero = problem.clamp(&DVector::zeros(problem.dynamics.input_dim()));
            inputs = vec![zero; problem.horizon];
            rollout(problem, x0, &inputs).map_err(|_| first)?
        }
    };

    let tol = T::lit(settings.tolerance);
    let tiny = T::lit(1e-300_f64.max(f64::MIN_POSITIVE));
    let mu_min = T::lit(settings.mu_init);
    let mu_max = T::lit(settings.mu_max);
    let mut mu = mu_min;
    let mut history = vec![objective];
    let mut iterations = 0;
    let mut converged = false;

    'outer: while iterations < settings.max_iterations {
        iterations += 1;
        let jacobians = match (0..problem.horizon)
            .map(|k| problem.dynamics.linearize(&states[k], &inputs[k]))
            .collect::<Result<Vec<_>>>()
        {
            Ok(j) => j,
            Err(_) => break,
        };
        loop {
            let gains = loop {
                match backward_pass(problem, &states, &inputs, &jacobians, mu) {
                    Some(g) => break g,
                    None => {
                        mu *= T::lit(10.0);
                        if mu > mu_max {
                            break 'outer;
                        }
                    }
                }
            };
            let full_reduction = -(gains.linear + gains.quadratic * T::lit(0.5));
            if full_reduction <= tol * objective.abs().max(tiny) {
                converged = true;
                break 'outer;
            }
            let mut alpha = T::one();
            let mut accepted = None;
            for _ in 0..settings.line_search_steps {
                if let Ok((xs, us, value)) = forward_pass(problem, &states, &inputs, &gains, alpha) {
                    let expected = -(alpha * gains.linear + alpha * alpha * T::lit(0.5) * gains.quadratic);
                    let actual = objective - value;
                    if actual > T::zero() && actual >= T::lit(settings.armijo) * expected {
                        accepted = Some((xs, us, value));
                        break;
                    }
                }
                alpha *= T::lit(0.5);
            }
            match accepted {
                Some((xs, us, value)) => {
                    let improvement = (objective - value) / objective.abs().max(tiny);
                    states = xs;
                    inputs = us;
                    objective = value;
                    history.push(value);
                    mu = (mu * T::lit(0.5)).max(mu_min);
                    if improvement < tol {
                        converged = true;
                        break 'outer;
                    }
                    continue 'outer;
                }
                None => {
                    mu *= T::lit(10.0);
                    if mu > mu_max {
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(MpcSolution {
        inputs,
        states,
        objective,
        iterations,
        converged,
        objective_history: history,
    })
}

/// Shifts `prev` by one stage, repeating the last input.
pub fn shift_warm_start<T: Real>(prev: &[DVector<T>]) -> Vec<DVector<T>> {
    let mut shifted: Vec<DVector<T>> = prev.iter().skip(1).cloned().collect();
    if let Some(last) = prev.last() {
        shifted.push(last.clone());
    }
    shifted
}

/// One receding-horizon step: solve from `x0` warm-started with the shifted
/// previous inputs, return the first input.
pub fn receding_step<T: Real, D: DiscreteDynamics<T>>(
    problem: &MpcProblem<'_, T, D>,
    x0: &DVector<T>,
    prev: Option<&MpcSolution<T>>,
) -> Result<(DVector<T>, MpcSolution<T>)> {
    let warm = prev.map(|p| shift_warm_start(&p.inputs));
    let solution = solve(problem, x0, warm.as_deref())?;
    let first = solution.inputs[0].clone();
    Ok((first, solution))
}
