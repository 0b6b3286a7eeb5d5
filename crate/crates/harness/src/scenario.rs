//! Turns a resolved scenario into core episode configurations.

use nalgebra::{DVector, Matrix3, Vector3};
use ssimpc::controller::{ControllerKind, EpisodeConfig, InitialStateSpec};
use ssimpc::estimator::LearningRate;
use ssimpc::mpc::{CostSpec, SolverSettings};
use ssimpc::plants::{
    make_cartpole, make_quadrotor, CartPoleParams, CartPoleSetup, NoiseSpec, PathParams, PlantModel, QuadrotorParams,
    ReferenceTrajectory,
};

use crate::config::{ControllerName, LearningRateConfig, NoiseKind, PlantConfig, ReferenceConfig, ScenarioConfig};
use crate::error::HarnessError;

impl From<ControllerName> for ControllerKind {
    fn from(name: ControllerName) -> Self {
        match name {
            ControllerName::SsiMpc => ControllerKind::SsiMpc,
            ControllerName::NominalMpc => ControllerKind::NominalMpc,
            ControllerName::ClairvoyantMpc => ControllerKind::ClairvoyantMpc,
        }
    }
}

/// Hyperparameters that vary across a sweep or regret study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overrides {
    pub controller: ControllerKind,
    pub features: usize,
    pub learning_rate: LearningRate,
    pub steps: usize,
    pub seed: u64,
}

impl Overrides {
    /// The scenario's own settings for `controller` and `seed`.
    pub fn from_scenario(cfg: &ScenarioConfig, controller: ControllerKind, seed: u64) -> Self {
        let steps = cfg.steps();
        Self {
            controller,
            features: cfg.controller.features.unwrap_or(1),
            learning_rate: learning_rate(cfg, steps),
            steps,
            seed,
        }
    }
}

/// `η` for an episode of `steps` steps.
pub fn learning_rate(cfg: &ScenarioConfig, steps: usize) -> LearningRate {
    match cfg.controller.learning_rate {
        Some(LearningRateConfig::HorizonScaled(c)) => LearningRate::HorizonScaled { c, horizon: steps },
        Some(LearningRateConfig::Fixed(eta)) => LearningRate::Fixed(eta),
        None => LearningRate::Fixed(0.0),
    }
}

/// `c` in `η = c / √T`: given directly, or read off a fixed rate at the
/// scenario's own length.
pub fn horizon_constant(cfg: &ScenarioConfig) -> f64 {
    match cfg.controller.learning_rate {
        Some(LearningRateConfig::HorizonScaled(c)) => c,
        Some(LearningRateConfig::Fixed(eta)) => eta * (cfg.steps() as f64).sqrt(),
        None => 0.0,
    }
}

fn unwrap<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T, HarnessError> {
    v.as_ref()
        .ok_or_else(|| HarnessError::Config(format!("{key} is unresolved")))
}

type PlantPair = (PlantModel<f64>, PlantModel<f64>, ReferenceTrajectory<f64>);

fn plants(cfg: &ScenarioConfig) -> Result<PlantPair, HarnessError> {
    let scales = unwrap(&cfg.controller.feature_scales, "controller.feature_scales")?;
    match &cfg.plant {
        PlantConfig::Cartpole(c) => {
            let params = CartPoleParams {
                cart_mass: c.cart_mass,
                pole_mass: c.pole_mass,
                half_length: c.half_length,
                gravity: c.gravity,
            };
            let setup = CartPoleSetup {
                dt: 1.0 / c.rate_hz,
                force_limit: c.force_limit,
                feature_scales: Some(scales.clone()),
            };
            let (truth, nominal) = make_cartpole(params, c.nominal_scale, &setup)?;
            let reference = ReferenceTrajectory::Setpoint {
                state: DVector::zeros(4),
                input: DVector::zeros(1),
            };
            Ok((truth, nominal, reference))
        }
        PlantConfig::Quadrotor(q) => {
            let d = q.drag_coefficients;
            let params = QuadrotorParams {
                mass: q.mass,
                gravity: Vector3::new(0.0, 0.0, -q.gravity),
                drag: Matrix3::from_diagonal(&Vector3::new(d[0], d[1], d[2])),
                thrust_min: 0.0,
                thrust_max: q.thrust_max.unwrap_or(2.0 * q.mass * q.gravity),
                rate_limit: q.rate_limit,
                dt: 1.0 / q.rate_hz,
                feature_scales: Some(scales.clone()),
            };
            let (truth, nominal) = make_quadrotor(&params, q.drag)?;
            let hover = params.hover_thrust();
            let path = |center: [f64; 3], radius, max_speed, ramp_time| PathParams {
                center: Vector3::from(center),
                radius,
                max_speed,
                ramp_time,
                hover_thrust: hover,
            };
            let reference = match q.reference {
                ReferenceConfig::Setpoint { position } => {
                    let mut state = DVector::zeros(10);
                    state.rows_mut(0, 3).copy_from_slice(&position);
                    state[6] = 1.0;
                    ReferenceTrajectory::Setpoint {
                        state,
                        input: DVector::from_vec(vec![hover, 0.0, 0.0, 0.0]),
                    }
                }
                ReferenceConfig::Circle {
                    center,
                    radius,
                    max_speed,
                    ramp_time,
                } => ReferenceTrajectory::Circle(path(center, radius, max_speed, ramp_time)),
                ReferenceConfig::Lemniscate {
                    center,
                    radius,
                    max_speed,
                    ramp_time,
                } => ReferenceTrajectory::Lemniscate(path(center, radius, max_speed, ramp_time)),
            };
            Ok((truth, nominal, reference))
        }
    }
}

fn noise(cfg: &ScenarioConfig) -> NoiseSpec {
    let scale = cfg.noise.scale.clone();
    match cfg.noise.kind {
        NoiseKind::None => NoiseSpec::none(),
        NoiseKind::Gaussian => NoiseSpec::gaussian(scale, 0),
        NoiseKind::BoundedUniform => NoiseSpec::bounded_uniform(scale, 0),
    }
}

/// Core configuration of one episode of a resolved scenario.
pub fn episode_config(cfg: &ScenarioConfig, o: &Overrides) -> Result<EpisodeConfig<f64>, HarnessError> {
    let c = &cfg.controller;
    let (truth, nominal, reference) = plants(cfg)?;
    let cost = CostSpec::diagonal(
        unwrap(&c.q, "controller.q")?,
        unwrap(&c.r, "controller.r")?,
        Some(unwrap(&c.q_terminal, "controller.q_terminal")?),
    )?;
    let initial_state = InitialStateSpec::new(
        DVector::from_vec(unwrap(&cfg.initial_state.lower, "initial_state.lower")?.clone()),
        DVector::from_vec(unwrap(&cfg.initial_state.upper, "initial_state.upper")?.clone()),
    )?;
    let solver = SolverSettings {
        max_iterations: *unwrap(&c.max_iterations, "controller.max_iterations")?,
        tolerance: *unwrap(&c.tolerance, "controller.tolerance")?,
        ..SolverSettings::default()
    };
    let episode = EpisodeConfig {
        truth,
        nominal,
        noise: noise(cfg),
        controller: o.controller,
        feature_count: o.features,
        bandwidth: *unwrap(&c.bandwidth, "controller.bandwidth")?,
        learning_rate: o.learning_rate,
        radius: *unwrap(&c.coefficient_bound, "controller.coefficient_bound")?,
        horizon: *unwrap(&c.horizon, "controller.horizon")?,
        cost,
        reference,
        steps: o.steps,
        initial_state,
        seed: o.seed,
        solver,
    };
    episode.validate()?;
    Ok(episode)
}
