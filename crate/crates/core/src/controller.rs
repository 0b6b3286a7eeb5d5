//! The closed loop: at every step solve the MPC on the live model, apply the
//! first input to the truth plant, observe the residual, and take one
//! estimator step. Also the nominal baseline (estimator off) and the
//! clairvoyant controller (MPC on the true map).

use nalgebra::DVector;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::estimator::{EstimatorState, LearningRate, Observation};
use crate::mpc::{
    self, AugmentedDynamics, CostSpec, DiscreteDynamics, MpcProblem, MpcSolution, SolverSettings, TrueDynamics,
};
use crate::plants::{NoiseSource, NoiseSpec, PlantModel, ReferenceTrajectory};
use crate::rff::{FeatureSet, KernelSpec, ParamEstimate};
use crate::scalar::{all_finite, Real};
use crate::seeds::{stream_rng, stream_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// MPC on the nominal model plus the online estimate.
    SsiMpc,
    /// MPC on the nominal model only.
    NominalMpc,
    /// MPC on the true noise-free map.
    ClairvoyantMpc,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::SsiMpc => "ssi_mpc",
            ControllerKind::NominalMpc => "nominal_mpc",
            ControllerKind::ClairvoyantMpc => "clairvoyant_mpc",
        }
    }
}

/// Componentwise uniform box for the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialStateSpec<T> {
    lower: DVector<T>,
    upper: DVector<T>,
}

impl<T: Real> InitialStateSpec<T> {
    pub fn new(lower: DVector<T>, upper: DVector<T>) -> Result<Self> {
        check_dim("initial state bounds", lower.len(), upper.len())?;
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::InvalidParameter(format!(
                "initial state range {i} has lower {} > upper {}",
                lower[i].as_f64(),
                upper[i].as_f64()
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric box `[-h, h]` per component.
    pub fn symmetric(half_widths: &[T]) -> Result<Self> {
        let upper = DVector::from_column_slice(half_widths);
        Self::new(-upper.clone(), upper)
    }

    pub fn point(x: DVector<T>) -> Self {
        Self {
            lower: x.clone(),
            upper: x,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
    pub fn lower(&self) -> &DVector<T> {
        &self.lower
    }
    pub fn upper(&self) -> &DVector<T> {
        &self.upper
    }
}

/// One componentwise-uniform draw.
pub fn initial_state_sample<T: Real, R: Rng + ?Sized>(spec: &InitialStateSpec<T>, rng: &mut R) -> DVector<T> {
    DVector::from_fn(spec.dim(), |i, _| {
        let (lo, hi) = (spec.lower[i].as_f64(), spec.upper[i].as_f64());
        if lo == hi {
            spec.lower[i]
        } else {
            T::lit(rng.random_range(lo..=hi))
        }
    })
}

/// Everything an episode depends on.
#[derive(Debug, Clone)]
pub struct EpisodeConfig<T> {
    pub truth: PlantModel<T>,
    pub nominal: PlantModel<T>,
    pub noise: NoiseSpec,
    pub controller: ControllerKind,
    pub feature_count: usize,
    pub bandwidth: T,
    pub learning_rate: LearningRate,
    /// Coefficient bound `B_h`.
    pub radius: T,
    pub horizon: usize,
    pub cost: CostSpec<T>,
    pub reference: ReferenceTrajectory<T>,
    pub steps: usize,
    pub initial_state: InitialStateSpec<T>,
    pub seed: u64,
    pub solver: SolverSettings,
}

impl<T: Real> EpisodeConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::InvalidParameter("episode needs at least one step".into()));
        }
        if self.feature_count < 1 {
            return Err(Error::InvalidParameter("feature count must be at least 1".into()));
        }
        if self.horizon < 2 {
            return Err(Error::InvalidParameter(format!(
                "horizon must be at least 2, got {}",
                self.horizon
            )));
        }
        if !(self.bandwidth > T::zero()) {
            return Err(Error::InvalidParameter("kernel bandwidth must be positive".into()));
        }
        if !(self.radius > T::zero()) {
            return Err(Error::InvalidParameter("coefficient bound must be positive".into()));
        }
        self.learning_rate.validate()?;
        let nx = self.nominal.state_dim();
        check_dim("truth state", nx, self.truth.state_dim())?;
        check_dim("truth input", self.nominal.input_dim(), self.truth.input_dim())?;
        check_dim("initial state", nx, self.initial_state.dim())?;
        check_dim("reference state", nx, self.reference.state_dim())?;
        check_dim("cost state weight", nx, self.cost.state_dim())?;
        check_dim("cost input weight", self.nominal.input_dim(), self.cost.input_dim())?;
        self.noise.scales(nx)?;
        Ok(())
    }

    /// Same episode under another controller.
    pub fn with_controller(&self, controller: ControllerKind) -> Self {
        Self {
            controller,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub t: usize,
    pub state: DVector<T>,
    pub input: DVector<T>,
    /// Observed `x_{t+1} − F(x_t, u_t)`.
    pub residual: DVector<T>,
    /// Prediction loss of the model in use before its update.
    pub loss: T,
    pub stage_cost: T,
    /// MPC objective `V_t`.
    pub objective: T,
    pub solver_iterations: usize,
    pub converged: bool,
    /// `max |α̂|` after the update.
    pub param_max_abs: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary<T> {
    pub cumulative_cost: T,
    pub cumulative_state_error: T,
    pub rmse: T,
    pub final_params: ParamEstimate<T>,
    pub failed: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog<T> {
    pub controller: ControllerKind,
    pub records: Vec<StepRecord<T>>,
    /// Reference state at every logged step.
    pub reference_states: Vec<DVector<T>>,
    pub position_dims: std::ops::Range<usize>,
    pub summary: EpisodeSummary<T>,
}

impl<T: Real> TrajectoryLog<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
    pub fn failed(&self) -> bool {
        self.summary.failed
    }
    pub fn losses(&self) -> Vec<T> {
        self.records.iter().map(|r| r.loss).collect()
    }
    pub fn stage_costs(&self) -> Vec<T> {
        self.records.iter().map(|r| r.stage_cost).collect()
    }
}

fn solve_step<T: Real, D: DiscreteDynamics<T>>(
    cfg: &EpisodeConfig<T>,
    dynamics: D,
    references: Vec<(DVector<T>, DVector<T>)>,
    x: &DVector<T>,
    prev: Option<&MpcSolution<T>>,
) -> Result<(DVector<T>, MpcSolution<T>)> {
    let problem = MpcProblem::for_plant(cfg.horizon, dynamics, &cfg.cost, references, &cfg.nominal, cfg.solver)?;
    mpc::receding_step(&problem, x, prev)
}

fn position_rmse<T: Real>(records: &[StepRecord<T>], references: &[DVector<T>], dims: &std::ops::Range<usize>) -> T {
    if records.is_empty() {
        return T::zero();
    }
    let sum = records.iter().zip(references).fold(T::zero(), |acc, (r, xr)| {
        acc + dims.clone().fold(T::zero(), |s, i| {
            let e = r.state[i] - xr[i];
            s + e * e
        })
    });
    (sum / T::lit(records.len() as f64)).sqrt()
}

/// Runs one episode. Solver or simulation failure ends the episode early
/// with `summary.failed` set; only invalid configurations are errors.
pub fn run_episode<T: Real>(cfg: &EpisodeConfig<T>) -> Result<TrajectoryLog<T>> {
    cfg.validate()?;
    let nominal = &cfg.nominal;
    let truth = &cfg.truth;
    let nx = nominal.state_dim();
    let dt = nominal.dt();

    let mut init_rng = stream_rng(cfg.seed, Stream::InitialState);
    let mut x = nominal.normalize_state(&initial_state_sample(&cfg.initial_state, &mut init_rng));
    let kernel = KernelSpec::gaussian(cfg.bandwidth, nominal.feature_dim())?;
    let features = FeatureSet::sample(kernel, cfg.feature_count, stream_seed(cfg.seed, Stream::Features))?;
    let mut noise = NoiseSource::with_rng(&cfg.noise, nx, stream_rng(cfg.seed, Stream::Noise))?;
    let mut estimator = EstimatorState::new(nx, cfg.feature_count, cfg.radius, T::lit(cfg.learning_rate.value()))?;

    let mut records = Vec::with_capacity(cfg.steps);
    let mut reference_states = Vec::with_capacity(cfg.steps);
    let mut prev: Option<MpcSolution<T>> = None;
    let mut failure = None;

    for t in 0..cfg.steps {
        let references = (0..=cfg.horizon)
            .map(|k| cfg.reference.at(T::lit((t + k) as f64) * dt))
            .collect::<Result<Vec<_>>>()?;
        let (x_ref, u_ref) = references[0].clone();

        let solved = match cfg.controller {
            ControllerKind::SsiMpc => AugmentedDynamics::new(nominal, &features, &estimator.params)
                .and_then(|d| solve_step(cfg, d, references, &x, prev.as_ref())),
            ControllerKind::NominalMpc => {
                solve_step(cfg, AugmentedDynamics::nominal(nominal), references, &x, prev.as_ref())
            }
            ControllerKind::ClairvoyantMpc => solve_step(cfg, TrueDynamics::new(truth), references, &x, prev.as_ref()),
        };
        let (u, solution) = match solved {
            Ok(s) => s,
            Err(e) => {
                failure = Some(format!("step {t}: MPC failed: {e}"));
                break;
            }
        };
        let x_next = match truth.step_truth(&mut noise, &x, &u) {
            Ok(x) if all_finite(&x) => x,
            Ok(_) => {
                failure = Some(format!("step {t}: state diverged"));
                break;
            }
            Err(e) => {
                failure = Some(format!("step {t}: plant step failed: {e}"));
                break;
            }
        };
        let residual = nominal.observe_residual(&x, &u, &x_next)?;

        let loss = match cfg.controller {
            ControllerKind::SsiMpc => {
                let z = nominal.features(&x, &u)?;
                let obs = Observation {
                    features: features.evaluate(&z)?,
                    target: residual.clone(),
                };
                let loss = estimator.loss(&obs)?;
                estimator = estimator.update(&obs)?;
                loss
            }
            ControllerKind::NominalMpc => residual.norm_squared(),
            ControllerKind::ClairvoyantMpc => {
                let exact = truth.step_noise_free(&x, &u)? - nominal.nominal_discrete(&x, &u)?;
                (&residual - exact).norm_squared()
            }
        };

        records.push(StepRecord {
            t,
            stage_cost: cfg.cost.stage(&x, &u, &x_ref, &u_ref),
            state: x,
            input: u,
            residual,
            loss,
            objective: solution.objective,
            solver_iterations: solution.iterations,
            converged: solution.converged,
            param_max_abs: estimator.params.max_abs(),
        });
        reference_states.push(x_ref);
        x = x_next;
        prev = Some(solution);
    }

    let cumulative_cost = records.iter().fold(T::zero(), |a, r| a + r.stage_cost);
    let cumulative_state_error = records.iter().fold(T::zero(), |a, r| a + r.state.norm_squared());
    let position_dims = nominal.position_dims();
    let rmse = position_rmse(&records, &reference_states, &position_dims);
    Ok(TrajectoryLog {
        controller: cfg.controller,
        records,
        reference_states,
        position_dims,
        summary: EpisodeSummary {
            cumulative_cost,
            cumulative_state_error,
            rmse,
            final_params: estimator.params,
            failed: failure.is_some(),
            failure,
        },
    })
}

/// Runs the same episode under two controllers. Both see the same initial
/// state, features, and noise sequence; their trajectories evolve
/// independently.
pub fn run_paired<T: Real>(
    cfg_alg: &EpisodeConfig<T>,
    cfg_oracle: &EpisodeConfig<T>,
) -> Result<(TrajectoryLog<T>, TrajectoryLog<T>)> {
    let same_plant = |a: &PlantModel<T>, b: &PlantModel<T>| {
        a.name() == b.name()
            && a.state_dim() == b.state_dim()
            && a.input_dim() == b.input_dim()
            && a.dt() == b.dt()
            && a.input_lower() == b.input_lower()
            && a.input_upper() == b.input_upper()
    };
    if !same_plant(&cfg_alg.truth, &cfg_oracle.truth) || !same_plant(&cfg_alg.nominal, &cfg_oracle.nominal) {
        return Err(Error::IncompatibleConfigs(
            "paired episodes must use the same plants".into(),
        ));
    }
    if cfg_alg.seed != cfg_oracle.seed || cfg_alg.noise != cfg_oracle.noise || cfg_alg.steps != cfg_oracle.steps {
        return Err(Error::IncompatibleConfigs(
            "paired episodes must share seed, noise, and length".into(),
        ));
    }
    Ok((run_episode(cfg_alg)?, run_episode(cfg_oracle)?))
}
