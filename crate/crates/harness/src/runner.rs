//! Seeded execution of scenarios: repeated runs, (M, η) sweeps, and paired
//! regret studies over several horizons.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use ssimpc::controller::{run_episode, run_paired, ControllerKind, TrajectoryLog};
use ssimpc::estimator::LearningRate;
use ssimpc::metrics::{dynamic_regret, sublinearity_slope, SlopeFit};
use ssimpc::seeds::repeat_seed;

use crate::config::{to_toml, ScenarioConfig};
use crate::error::HarnessError;
use crate::output::{csv_bytes, write_atomic, write_episode_csv, write_json};
use crate::scenario::{episode_config, horizon_constant, Overrides};

/// Median of the finite values; NaN when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeOutcome {
    pub controller: &'static str,
    pub features: usize,
    pub eta: f64,
    pub repeat: usize,
    pub seed: u64,
    pub steps: usize,
    pub cumulative_cost: f64,
    pub cumulative_state_error: f64,
    pub rmse: f64,
    pub failed: bool,
    pub failure: Option<String>,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub controller: &'static str,
    pub features: usize,
    pub eta: f64,
    pub episodes: usize,
    pub failures: usize,
    pub median_cumulative_cost: f64,
    pub median_cumulative_state_error: f64,
    pub median_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: &'static str,
    pub groups: Vec<GroupSummary>,
    pub episodes: Vec<EpisodeOutcome>,
}

impl RunReport {
    pub fn failures(&self) -> usize {
        self.episodes.iter().filter(|e| e.failed).count()
    }

    pub fn group(&self, controller: ControllerKind, features: usize, eta: f64) -> Option<&GroupSummary> {
        self.groups
            .iter()
            .find(|g| g.controller == controller.name() && g.features == features && g.eta == eta)
    }
}

struct Job {
    overrides: Overrides,
    repeat: usize,
    file: String,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {workers} workers: {e}")))
}

fn outcome(job: &Job, log: &TrajectoryLog<f64>) -> EpisodeOutcome {
    let o = &job.overrides;
    EpisodeOutcome {
        controller: o.controller.name(),
        features: o.features,
        eta: o.learning_rate.value(),
        repeat: job.repeat,
        seed: o.seed,
        steps: o.steps,
        cumulative_cost: log.summary.cumulative_cost,
        cumulative_state_error: log.summary.cumulative_state_error,
        rmse: log.summary.rmse,
        failed: log.failed(),
        failure: log.summary.failure.clone(),
        csv: job.file.clone(),
    }
}

fn execute(
    cfg: &ScenarioConfig,
    out: &Path,
    jobs: &[Job],
    workers: usize,
) -> Result<Vec<EpisodeOutcome>, HarnessError> {
    let (nx, nu) = (cfg.plant.state_dim(), cfg.plant.input_dim());
    let results: Vec<Result<EpisodeOutcome, HarnessError>> = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|job| {
                let episode = episode_config(cfg, &job.overrides)?;
                let log = run_episode(&episode)?;
                write_episode_csv(&out.join(&job.file), &log, nx, nu)?;
                Ok(outcome(job, &log))
            })
            .collect()
    });
    results.into_iter().collect()
}

fn summarize(episodes: &[EpisodeOutcome]) -> Vec<GroupSummary> {
    let mut groups: Vec<GroupSummary> = Vec::new();
    for e in episodes {
        if groups
            .iter()
            .any(|g| g.controller == e.controller && g.features == e.features && g.eta == e.eta)
        {
            continue;
        }
        let members: Vec<&EpisodeOutcome> = episodes
            .iter()
            .filter(|o| o.controller == e.controller && o.features == e.features && o.eta == e.eta)
            .collect();
        let ok: Vec<&&EpisodeOutcome> = members.iter().filter(|o| !o.failed).collect();
        let med = |f: fn(&EpisodeOutcome) -> f64| median(&ok.iter().map(|o| f(o)).collect::<Vec<_>>());
        groups.push(GroupSummary {
            controller: e.controller,
            features: e.features,
            eta: e.eta,
            episodes: members.len(),
            failures: members.len() - ok.len(),
            median_cumulative_cost: med(|o| o.cumulative_cost),
            median_cumulative_state_error: med(|o| o.cumulative_state_error),
            median_rmse: med(|o| o.rmse),
        });
    }
    groups
}

fn write_scenario_echo(cfg: &ScenarioConfig, out: &Path) -> Result<(), HarnessError> {
    write_atomic(&out.join("scenario.toml"), to_toml(cfg)?.as_bytes())
}

/// Repeats of the configured controller and its baselines, all on the same
/// per-repeat seeds.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path, workers: usize) -> Result<RunReport, HarnessError> {
    let mut controllers = vec![cfg.controller.kind];
    for b in &cfg.run.baselines {
        if !controllers.contains(b) {
            controllers.push(*b);
        }
    }
    let mut jobs = Vec::new();
    for c in controllers {
        let kind = ControllerKind::from(c);
        for r in 0..cfg.run.repeats {
            let seed = repeat_seed(cfg.run.seed, &cfg.name, r as u64);
            jobs.push(Job {
                overrides: Overrides::from_scenario(cfg, kind, seed),
                repeat: r,
                file: format!("episodes/{}_r{r:03}.csv", kind.name()),
            });
        }
    }
    write_scenario_echo(cfg, out)?;
    let episodes = execute(cfg, out, &jobs, workers)?;
    let report = RunReport {
        scenario: cfg.name.clone(),
        mode: "run",
        groups: summarize(&episodes),
        episodes,
    };
    write_json(&out.join("summary.json"), &report)?;
    Ok(report)
}

/// One row per (M, η, repeat) of the sweep grid; the per-repeat seed does not
/// depend on (M, η).
pub fn run_sweep(cfg: &ScenarioConfig, out: &Path, workers: usize) -> Result<RunReport, HarnessError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| HarnessError::Config("sweep needs a [sweep] block".into()))?;
    let kind = ControllerKind::from(cfg.controller.kind);
    let mut jobs = Vec::new();
    for &m in &sweep.features {
        for &eta in &sweep.learning_rates {
            for r in 0..cfg.run.repeats {
                let seed = repeat_seed(cfg.run.seed, &cfg.name, r as u64);
                let mut overrides = Overrides::from_scenario(cfg, kind, seed);
                overrides.features = m;
                overrides.learning_rate = LearningRate::Fixed(eta);
                jobs.push(Job {
                    overrides,
                    repeat: r,
                    file: format!("episodes/{}_M{m}_eta{eta}_r{r:03}.csv", kind.name()),
                });
            }
        }
    }
    write_scenario_echo(cfg, out)?;
    let episodes = execute(cfg, out, &jobs, workers)?;

    let path = out.join("sweep_summary.csv");
    let header: Vec<String> = [
        "M",
        "eta",
        "repeat",
        "seed",
        "cumulative_cost",
        "cumulative_state_error",
        "rmse",
        "failed",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = episodes
        .iter()
        .map(|e| {
            vec![
                e.features.to_string(),
                e.eta.to_string(),
                e.repeat.to_string(),
                e.seed.to_string(),
                e.cumulative_cost.to_string(),
                e.cumulative_state_error.to_string(),
                e.rmse.to_string(),
                e.failed.to_string(),
            ]
        })
        .collect();
    write_atomic(&path, &csv_bytes(&path, &header, &rows)?)?;

    let report = RunReport {
        scenario: cfg.name.clone(),
        mode: "sweep",
        groups: summarize(&episodes),
        episodes,
    };
    write_json(&out.join("summary.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRow {
    pub horizon: usize,
    pub eta: f64,
    pub repeat: usize,
    pub seed: u64,
    pub alg_cost: f64,
    pub oracle_cost: f64,
    pub regret: f64,
    pub regret_per_step: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretStudy {
    pub scenario: String,
    /// Regret is measured against an MPC that knows the true dynamics, a
    /// stand-in for the best controller in hindsight.
    pub comparator: &'static str,
    pub horizons: Vec<usize>,
    pub c: f64,
    pub median_regret: Vec<f64>,
    pub median_regret_per_step: Vec<f64>,
    pub fit: Option<SlopeFitSummary>,
    pub failures: usize,
    pub rows: Vec<RegretRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFitSummary {
    pub exponent: f64,
    pub intercept: f64,
    pub residual: f64,
    pub floored: bool,
}

impl From<SlopeFit> for SlopeFitSummary {
    fn from(f: SlopeFit) -> Self {
        Self {
            exponent: f.exponent,
            intercept: f.intercept,
            residual: f.residual,
            floored: f.floored,
        }
    }
}

/// Paired ssi-vs-clairvoyant runs at each horizon `T` with `η = c/√T`,
/// followed by a log-log fit of the median regret.
pub fn run_regret(
    cfg: &ScenarioConfig,
    out: &Path,
    horizons: &[usize],
    workers: usize,
) -> Result<RegretStudy, HarnessError> {
    if horizons.len() < 3 || horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 {
        return Err(HarnessError::Config(
            "regret needs at least three positive, strictly increasing horizons".into(),
        ));
    }
    let c = horizon_constant(cfg);
    let (nx, nu) = (cfg.plant.state_dim(), cfg.plant.input_dim());
    let mut jobs = Vec::new();
    for &t in horizons {
        for r in 0..cfg.run.repeats {
            jobs.push((t, r, repeat_seed(cfg.run.seed, &cfg.name, r as u64)));
        }
    }
    write_scenario_echo(cfg, out)?;
    let results: Vec<Result<RegretRow, HarnessError>> = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(t, r, seed)| {
                let lr = LearningRate::HorizonScaled { c, horizon: t };
                let mut o = Overrides::from_scenario(cfg, ControllerKind::SsiMpc, seed);
                o.steps = t;
                o.learning_rate = lr;
                let alg = episode_config(cfg, &o)?;
                let oracle = alg.with_controller(ControllerKind::ClairvoyantMpc);
                let (a, b) = run_paired(&alg, &oracle)?;
                let dir = PathBuf::from("episodes");
                write_episode_csv(
                    &out.join(dir.join(format!("regret_T{t}_r{r:03}_ssi_mpc.csv"))),
                    &a,
                    nx,
                    nu,
                )?;
                write_episode_csv(
                    &out.join(dir.join(format!("regret_T{t}_r{r:03}_clairvoyant_mpc.csv"))),
                    &b,
                    nx,
                    nu,
                )?;
                let failed = a.failed() || b.failed();
                let (alg_cost, oracle_cost, regret) = if a.len() == b.len() {
                    let rep = dynamic_regret(&a, &b)?;
                    (rep.alg_cumulative_cost, rep.oracle_cumulative_cost, rep.dynamic_regret)
                } else {
                    (a.summary.cumulative_cost, b.summary.cumulative_cost, f64::NAN)
                };
                Ok(RegretRow {
                    horizon: t,
                    eta: lr.value(),
                    repeat: r,
                    seed,
                    alg_cost,
                    oracle_cost,
                    regret,
                    regret_per_step: regret / t as f64,
                    failed,
                })
            })
            .collect()
    });
    let rows: Vec<RegretRow> = results.into_iter().collect::<Result<_, _>>()?;

    let per_t = |f: fn(&RegretRow) -> f64| -> Vec<f64> {
        horizons
            .iter()
            .map(|&t| {
                median(
                    &rows
                        .iter()
                        .filter(|r| r.horizon == t && !r.failed)
                        .map(f)
                        .collect::<Vec<_>>(),
                )
            })
            .collect()
    };
    let median_regret = per_t(|r| r.regret);
    let median_regret_per_step = per_t(|r| r.regret_per_step);
    let ts: Vec<f64> = horizons.iter().map(|&t| t as f64).collect();
    let fit = if median_regret.iter().all(|v| v.is_finite()) {
        Some(sublinearity_slope(&ts, &median_regret)?.into())
    } else {
        None
    };

    let path = out.join("regret.csv");
    let header: Vec<String> = [
        "horizon",
        "eta",
        "repeat",
        "seed",
        "alg_cost",
        "oracle_cost",
        "regret",
        "regret_per_step",
        "failed",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.horizon.to_string(),
                r.eta.to_string(),
                r.repeat.to_string(),
                r.seed.to_string(),
                r.alg_cost.to_string(),
                r.oracle_cost.to_string(),
                r.regret.to_string(),
                r.regret_per_step.to_string(),
                r.failed.to_string(),
            ]
        })
        .collect();
    write_atomic(&path, &csv_bytes(&path, &header, &table)?)?;

    let study = RegretStudy {
        scenario: cfg.name.clone(),
        comparator: "clairvoyant_mpc (proxy for the optimal controller in hindsight)",
        horizons: horizons.to_vec(),
        c,
        median_regret,
        median_regret_per_step,
        fit,
        failures: rows.iter().filter(|r| r.failed).count(),
        rows,
    };
    write_json(&out.join("regret_summary.json"), &study)?;
    Ok(study)
}
