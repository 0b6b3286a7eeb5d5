use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssimpc_harness::plot::{emit_plots, PlotKind};
use ssimpc_harness::runner::{run_regret, run_scenario, run_sweep};
use ssimpc_harness::{load_scenario, HarnessError, ScenarioConfig};

/// Simultaneous system identification and MPC experiments.
#[derive(Parser)]
#[command(name = "ssimpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Master seed; overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides run.output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel episodes; overrides run.workers.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Repeated episodes of the configured controller and its baselines.
    Run(Common),
    /// Every (M, η) pair of the [sweep] block.
    Sweep(Common),
    /// SVG plots from an artifact directory.
    Plot {
        #[arg(long)]
        artifacts: PathBuf,
        /// Comma-separated: error, prediction, sweep, regret.
        #[arg(long, value_delimiter = ',', default_value = "error,prediction")]
        kinds: Vec<String>,
    },
    /// Paired ssi vs clairvoyant runs at each horizon with η = c/√T.
    Regret {
        #[command(flatten)]
        common: Common,
        /// Comma-separated horizons in steps.
        #[arg(long, value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
    },
}

fn setup(common: &Common) -> Result<(ScenarioConfig, PathBuf, usize), HarnessError> {
    let mut cfg = load_scenario(&common.scenario)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(HarnessError::Config("--workers must be at least 1".into()));
        }
        cfg.run.workers = w;
    }
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from(cfg.output()));
    cfg.run.output = Some(out.display().to_string());
    let workers = cfg.run.workers;
    Ok((cfg, out, workers))
}

fn report_failures(failures: usize, total: usize) -> ExitCode {
    if failures > 0 {
        eprintln!("{failures} of {total} episodes failed");
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run(common) => {
            let (cfg, out, workers) = setup(&common)?;
            let report = run_scenario(&cfg, &out, workers)?;
            for g in &report.groups {
                println!(
                    "{}: {} episodes, {} failed, median cumulative cost {:.6}, median cumulative |x|^2 {:.6}, median RMSE {:.6}",
                    g.controller,
                    g.episodes,
                    g.failures,
                    g.median_cumulative_cost,
                    g.median_cumulative_state_error,
                    g.median_rmse
                );
            }
            println!("artifacts in {}", out.display());
            Ok(report_failures(report.failures(), report.episodes.len()))
        }
        Command::Sweep(common) => {
            let (cfg, out, workers) = setup(&common)?;
            let report = run_sweep(&cfg, &out, workers)?;
            for g in &report.groups {
                println!(
                    "M={} eta={}: median cumulative |x|^2 {:.6} ({} failed)",
                    g.features, g.eta, g.median_cumulative_state_error, g.failures
                );
            }
            println!("artifacts in {}", out.display());
            Ok(report_failures(report.failures(), report.episodes.len()))
        }
        Command::Regret { common, horizons } => {
            let (cfg, out, workers) = setup(&common)?;
            let study = run_regret(&cfg, &out, &horizons, workers)?;
            for (i, t) in study.horizons.iter().enumerate() {
                println!(
                    "T={t}: median regret {:.6}, per step {:.6}",
                    study.median_regret[i], study.median_regret_per_step[i]
                );
            }
            match &study.fit {
                Some(fit) => println!(
                    "fitted exponent p = {:.4} (proxy regret against clairvoyant MPC)",
                    fit.exponent
                ),
                None => println!("no exponent fitted: some horizon has no successful pair"),
            }
            println!("artifacts in {}", out.display());
            Ok(report_failures(study.failures, study.rows.len()))
        }
        Command::Plot { artifacts, kinds } => {
            let kinds = kinds.iter().map(|k| k.parse()).collect::<Result<Vec<PlotKind>, _>>()?;
            let digest = emit_plots(&artifacts, &kinds)?;
            for w in &digest.written {
                println!("wrote {}", artifacts.join(w).display());
            }
            for s in &digest.skipped {
                println!("skipped {}: {}", s.kind, s.reason);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
