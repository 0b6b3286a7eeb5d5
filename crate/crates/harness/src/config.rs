//! Scenario files (TOML).
//!
//! Parsing is strict: unknown keys are rejected by name. Every optional field
//! is filled with its plant-specific default during parsing, so the
//! serialized form of a parsed config lists every setting that was used and
//! parses back to the same value.

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub plant: PlantConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub initial_state: InitialStateConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantConfig {
    Cartpole(CartpoleConfig),
    Quadrotor(QuadrotorConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartpoleConfig {
    /// Mass and length scaling of the nominal model relative to the truth.
    pub nominal_scale: f64,
    pub force_limit: f64,
    pub rate_hz: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub half_length: f64,
    pub gravity: f64,
}

impl Default for CartpoleConfig {
    fn default() -> Self {
        Self {
            nominal_scale: 0.75,
            force_limit: 30.0,
            rate_hz: 15.0,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            gravity: 9.81,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrotorConfig {
    pub mass: f64,
    pub gravity: f64,
    /// Whether the truth plant carries the linear drag.
    pub drag: bool,
    /// Diagonal of the body-frame drag matrix.
    pub drag_coefficients: [f64; 3],
    pub thrust_max: Option<f64>,
    pub rate_limit: f64,
    pub rate_hz: f64,
    pub reference: ReferenceConfig,
}

impl Default for QuadrotorConfig {
    fn default() -> Self {
        Self {
            mass: 0.68,
            gravity: 9.81,
            drag: true,
            drag_coefficients: [0.3; 3],
            thrust_max: None,
            rate_limit: 3.0,
            rate_hz: 50.0,
            reference: ReferenceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    Setpoint {
        position: [f64; 3],
    },
    Circle {
        center: [f64; 3],
        radius: f64,
        max_speed: f64,
        ramp_time: f64,
    },
    Lemniscate {
        center: [f64; 3],
        radius: f64,
        max_speed: f64,
        ramp_time: f64,
    },
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig::Circle {
            center: [0.0, 0.0, 1.0],
            radius: 0.5,
            max_speed: 0.8,
            ramp_time: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
    BoundedUniform,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    /// One value for every state component, or one per component.
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerName {
    #[default]
    SsiMpc,
    NominalMpc,
    ClairvoyantMpc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LearningRateConfig {
    Fixed(f64),
    /// `η = c / √T` with `T` the episode length.
    HorizonScaled(f64),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerName,
    pub features: Option<usize>,
    pub learning_rate: Option<LearningRateConfig>,
    pub coefficient_bound: Option<f64>,
    pub horizon: Option<usize>,
    pub q: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
    pub q_terminal: Option<Vec<f64>>,
    pub bandwidth: Option<f64>,
    pub feature_scales: Option<Vec<f64>>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialStateConfig {
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub steps: Option<usize>,
    /// Seconds; converted to `round(duration / dt)` steps.
    pub duration: Option<f64>,
    pub repeats: usize,
    pub seed: u64,
    pub output: Option<String>,
    pub workers: usize,
    /// Extra controllers run on the same seeds as the main one.
    pub baselines: Vec<ControllerName>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            steps: None,
            duration: None,
            repeats: 1,
            seed: 0,
            output: None,
            workers: 1,
            baselines: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub features: Vec<usize>,
    pub learning_rates: Vec<f64>,
}

/// Parses and fully resolves a scenario.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, HarnessError> {
    let raw: ScenarioConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    raw.resolve()
}

pub fn to_toml(cfg: &ScenarioConfig) -> Result<String, HarnessError> {
    toml::to_string(cfg).map_err(|e| HarnessError::Config(e.to_string()))
}

fn positive(name: &str, v: f64) -> Result<(), HarnessError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn check_len(name: &str, v: &[f64], n: usize) -> Result<(), HarnessError> {
    if v.len() == n {
        Ok(())
    } else {
        Err(HarnessError::Config(format!(
            "{name} needs {n} entries, got {}",
            v.len()
        )))
    }
}

impl PlantConfig {
    pub fn state_dim(&self) -> usize {
        match self {
            PlantConfig::Cartpole(_) => 4,
            PlantConfig::Quadrotor(_) => 10,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            PlantConfig::Cartpole(_) => 1,
            PlantConfig::Quadrotor(_) => 4,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            PlantConfig::Cartpole(_) => 5,
            PlantConfig::Quadrotor(_) => 11,
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            PlantConfig::Cartpole(c) => 1.0 / c.rate_hz,
            PlantConfig::Quadrotor(c) => 1.0 / c.rate_hz,
        }
    }

    fn default_duration(&self) -> f64 {
        match self {
            PlantConfig::Cartpole(_) => 6.0,
            PlantConfig::Quadrotor(_) => 20.0,
        }
    }

    fn validate(&mut self) -> Result<(), HarnessError> {
        match self {
            PlantConfig::Cartpole(c) => {
                positive("plant.nominal_scale", c.nominal_scale)?;
                positive("plant.force_limit", c.force_limit)?;
                positive("plant.rate_hz", c.rate_hz)?;
                positive("plant.cart_mass", c.cart_mass)?;
                positive("plant.pole_mass", c.pole_mass)?;
                positive("plant.half_length", c.half_length)?;
                positive("plant.gravity", c.gravity)?;
            }
            PlantConfig::Quadrotor(c) => {
                positive("plant.mass", c.mass)?;
                positive("plant.gravity", c.gravity)?;
                positive("plant.rate_limit", c.rate_limit)?;
                positive("plant.rate_hz", c.rate_hz)?;
                if c.drag_coefficients.iter().any(|d| !(*d >= 0.0)) {
                    return Err(HarnessError::Config(
                        "plant.drag_coefficients must be nonnegative".into(),
                    ));
                }
                let thrust_max = c.thrust_max.unwrap_or(2.0 * c.mass * c.gravity);
                positive("plant.thrust_max", thrust_max)?;
                c.thrust_max = Some(thrust_max);
                match &c.reference {
                    ReferenceConfig::Setpoint { .. } => {}
                    ReferenceConfig::Circle {
                        radius,
                        max_speed,
                        ramp_time,
                        ..
                    }
                    | ReferenceConfig::Lemniscate {
                        radius,
                        max_speed,
                        ramp_time,
                        ..
                    } => {
                        positive("plant.reference.radius", *radius)?;
                        if !(*max_speed >= 0.0) || !(*ramp_time >= 0.0) {
                            return Err(HarnessError::Config(
                                "plant.reference.max_speed and ramp_time must be nonnegative".into(),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

struct ControllerDefaults {
    features: usize,
    learning_rate: f64,
    horizon: usize,
    q: Vec<f64>,
    r: Vec<f64>,
    terminal_factor: f64,
}

fn controller_defaults(plant: &PlantConfig) -> ControllerDefaults {
    match plant {
        PlantConfig::Cartpole(_) => ControllerDefaults {
            features: 75,
            learning_rate: 0.25,
            horizon: 20,
            q: vec![5.0, 0.1, 5.0, 0.1],
            r: vec![0.1],
            terminal_factor: 1.0,
        },
        PlantConfig::Quadrotor(_) => ControllerDefaults {
            features: 50,
            learning_rate: 1.0,
            horizon: 10,
            q: [100.0; 3].into_iter().chain([2.0; 3]).chain([0.05; 4]).collect(),
            r: vec![0.05; 4],
            terminal_factor: 50.0,
        },
    }
}

impl ScenarioConfig {
    /// Fills defaults and validates ranges. Idempotent.
    pub fn resolve(mut self) -> Result<Self, HarnessError> {
        if self.name.trim().is_empty() {
            return Err(HarnessError::Config("name must not be empty".into()));
        }
        self.plant.validate()?;
        let (nx, nu, nz) = (self.plant.state_dim(), self.plant.input_dim(), self.plant.feature_dim());

        match self.noise.kind {
            NoiseKind::None => {
                if !self.noise.scale.is_empty() {
                    return Err(HarnessError::Config("noise.scale given but noise.kind is none".into()));
                }
            }
            NoiseKind::Gaussian | NoiseKind::BoundedUniform => {
                if self.noise.scale.len() != 1 && self.noise.scale.len() != nx {
                    return Err(HarnessError::Config(format!(
                        "noise.scale needs 1 or {nx} entries, got {}",
                        self.noise.scale.len()
                    )));
                }
                if self.noise.scale.iter().any(|s| !(*s >= 0.0)) {
                    return Err(HarnessError::Config("noise.scale must be nonnegative".into()));
                }
            }
        }

        let d = controller_defaults(&self.plant);
        let c = &mut self.controller;
        let features = *c.features.get_or_insert(d.features);
        if features == 0 {
            return Err(HarnessError::Config("controller.features must be at least 1".into()));
        }
        match *c
            .learning_rate
            .get_or_insert(LearningRateConfig::Fixed(d.learning_rate))
        {
            LearningRateConfig::Fixed(eta) | LearningRateConfig::HorizonScaled(eta) => {
                positive("controller.learning_rate", eta)?
            }
        }
        positive("controller.coefficient_bound", *c.coefficient_bound.get_or_insert(10.0))?;
        let horizon = *c.horizon.get_or_insert(d.horizon);
        if horizon < 2 {
            return Err(HarnessError::Config("controller.horizon must be at least 2".into()));
        }
        let q = c.q.get_or_insert(d.q).clone();
        check_len("controller.q", &q, nx)?;
        check_len("controller.r", c.r.get_or_insert(d.r), nu)?;
        let qt = c
            .q_terminal
            .get_or_insert_with(|| q.iter().map(|v| v * d.terminal_factor).collect());
        check_len("controller.q_terminal", qt, nx)?;
        if q.iter().chain(qt.iter()).any(|v| !(*v >= 0.0)) {
            return Err(HarnessError::Config("controller.q entries must be nonnegative".into()));
        }
        if c.r.as_ref().is_some_and(|r| r.iter().any(|v| !(*v > 0.0))) {
            return Err(HarnessError::Config("controller.r entries must be positive".into()));
        }
        positive("controller.bandwidth", *c.bandwidth.get_or_insert(1.0))?;
        let scales = c.feature_scales.get_or_insert_with(|| vec![1.0; nz]);
        check_len("controller.feature_scales", scales, nz)?;
        if scales.iter().any(|s| !(*s > 0.0)) {
            return Err(HarnessError::Config(
                "controller.feature_scales must be positive".into(),
            ));
        }
        if *c.max_iterations.get_or_insert(50) == 0 {
            return Err(HarnessError::Config(
                "controller.max_iterations must be at least 1".into(),
            ));
        }
        positive("controller.tolerance", *c.tolerance.get_or_insert(1e-6))?;

        let (lower, upper) = self.default_initial_box();
        let lower = self.initial_state.lower.get_or_insert(lower).clone();
        let upper = self.initial_state.upper.get_or_insert(upper).clone();
        check_len("initial_state.lower", &lower, nx)?;
        check_len("initial_state.upper", &upper, nx)?;
        if let Some(i) = (0..nx).find(|&i| !(lower[i] <= upper[i])) {
            return Err(HarnessError::Config(format!(
                "initial_state range {i} has lower > upper"
            )));
        }

        let run = &mut self.run;
        let steps = match (run.steps, run.duration) {
            (Some(_), Some(_)) => {
                return Err(HarnessError::Config(
                    "run.steps and run.duration are mutually exclusive".into(),
                ))
            }
            (Some(s), None) => s,
            (None, duration) => {
                let seconds = duration.unwrap_or_else(|| self.plant.default_duration());
                positive("run.duration", seconds)?;
                (seconds / self.plant.dt()).round() as usize
            }
        };
        if steps == 0 {
            return Err(HarnessError::Config("run needs at least one step".into()));
        }
        run.steps = Some(steps);
        run.duration = None;
        if run.repeats == 0 {
            return Err(HarnessError::Config("run.repeats must be at least 1".into()));
        }
        if run.workers == 0 {
            return Err(HarnessError::Config("run.workers must be at least 1".into()));
        }
        run.output.get_or_insert_with(|| format!("out/{}", self.name));

        if let Some(sweep) = &self.sweep {
            if sweep.features.is_empty() || sweep.learning_rates.is_empty() {
                return Err(HarnessError::Config("sweep lists must be nonempty".into()));
            }
            if sweep.features.contains(&0) {
                return Err(HarnessError::Config("sweep.features must be at least 1".into()));
            }
            for eta in &sweep.learning_rates {
                positive("sweep.learning_rates", *eta)?;
            }
        }
        Ok(self)
    }

    fn default_initial_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.plant {
            PlantConfig::Cartpole(_) => (vec![-1.0, -0.1, -0.2, -0.1], vec![1.0, 0.1, 0.2, 0.1]),
            PlantConfig::Quadrotor(q) => {
                let start = match &q.reference {
                    ReferenceConfig::Setpoint { position } => *position,
                    ReferenceConfig::Circle { center, radius, .. } => [center[0] + radius, center[1], center[2]],
                    ReferenceConfig::Lemniscate { center, .. } => *center,
                };
                let mut lower = vec![0.0; 10];
                let mut upper = vec![0.0; 10];
                for i in 0..3 {
                    lower[i] = start[i] - 0.05;
                    upper[i] = start[i] + 0.05;
                }
                lower[6] = 1.0;
                upper[6] = 1.0;
                (lower, upper)
            }
        }
    }

    pub fn steps(&self) -> usize {
        self.run.steps.unwrap_or(1)
    }

    pub fn output(&self) -> &str {
        self.run.output.as_deref().unwrap_or("out")
    }
}
