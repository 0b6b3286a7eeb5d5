use std::fs;
use std::path::{Path, PathBuf};

use ssimpc_harness::config::SweepConfig;
use ssimpc_harness::output::{episode_header, write_atomic, Table};
use ssimpc_harness::plot::{emit_plots, PlotKind};
use ssimpc_harness::runner::{run_regret, run_scenario, run_sweep};
use ssimpc_harness::{parse_config, ScenarioConfig};

fn short_cartpole() -> ScenarioConfig {
    parse_config(
        r#"
name = "short"
[plant]
kind = "cartpole"
[run]
steps = 15
repeats = 2
seed = 9
baselines = ["nominal_mpc"]
"#,
    )
    .unwrap()
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical_for_any_worker_count() {
    let cfg = short_cartpole();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_scenario(&cfg, a.path(), 1).unwrap();
    run_scenario(&cfg, b.path(), 3).unwrap();
    let fa = files(a.path());
    assert_eq!(fa, files(b.path()));
    for f in &fa {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{}",
            f.display()
        );
    }
}

#[test]
fn run_layout_and_episode_schema() {
    let cfg = short_cartpole();
    let dir = tempfile::tempdir().unwrap();
    let report = run_scenario(&cfg, dir.path(), 1).unwrap();
    assert_eq!(report.episodes.len(), 4);
    assert_eq!(report.failures(), 0);

    let expected: Vec<PathBuf> = [
        "episodes/nominal_mpc_r000.csv",
        "episodes/nominal_mpc_r001.csv",
        "episodes/ssi_mpc_r000.csv",
        "episodes/ssi_mpc_r001.csv",
        "scenario.toml",
        "summary.json",
    ]
    .iter()
    .map(PathBuf::from)
    .collect();
    assert_eq!(files(dir.path()), expected);

    let table = Table::read(&dir.path().join("episodes/ssi_mpc_r000.csv")).unwrap();
    assert_eq!(table.header, episode_header(4, 1));
    assert_eq!(table.header.len(), 1 + 4 + 1 + 4 + 5);
    assert_eq!(table.rows.len(), 15);
    let t = table.numbers("t").unwrap();
    assert_eq!(t, (0..15).map(|i| i as f64).collect::<Vec<_>>());
    assert!(table.numbers("l_t").unwrap().iter().all(|v| v.is_finite() && *v >= 0.0));
    let conv = table.column("converged").unwrap();
    assert!(table.rows.iter().all(|r| r[conv] == "true" || r[conv] == "false"));

    // echoed scenario parses back to the same config
    let echo = fs::read_to_string(dir.path().join("scenario.toml")).unwrap();
    assert_eq!(parse_config(&echo).unwrap(), cfg);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["groups"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_has_one_row_per_grid_point_and_repeat() {
    let mut cfg = short_cartpole();
    cfg.run.baselines.clear();
    cfg.sweep = Some(SweepConfig {
        features: vec![10, 20],
        learning_rates: vec![0.1, 0.5, 1.0],
    });
    let dir = tempfile::tempdir().unwrap();
    let report = run_sweep(&cfg, dir.path(), 2).unwrap();
    assert_eq!(report.episodes.len(), 12);
    let table = Table::read(&dir.path().join("sweep_summary.csv")).unwrap();
    assert_eq!(
        table.header,
        [
            "M",
            "eta",
            "repeat",
            "seed",
            "cumulative_cost",
            "cumulative_state_error",
            "rmse",
            "failed"
        ]
    );
    assert_eq!(table.rows.len(), 12);
    // the same repeat shares its seed across the grid
    let seed = table.column("seed").unwrap();
    let repeat = table.column("repeat").unwrap();
    for r in ["0", "1"] {
        let seeds: Vec<&String> = table
            .rows
            .iter()
            .filter(|row| row[repeat] == r)
            .map(|row| &row[seed])
            .collect();
        assert_eq!(seeds.len(), 6);
        assert!(seeds.iter().all(|s| *s == seeds[0]));
    }
}

#[test]
fn sweep_without_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_sweep(&short_cartpole(), dir.path(), 1).is_err());
}

#[test]
fn atomic_writes_leave_no_temporaries() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("nested/out.txt");
    write_atomic(&target, b"first").unwrap();
    write_atomic(&target, b"second").unwrap();
    assert_eq!(fs::read(&target).unwrap(), b"second");
    assert_eq!(files(dir.path()), vec![PathBuf::from("nested/out.txt")]);
}

#[test]
fn regret_study_outputs() {
    let cfg = parse_config(
        r#"
name = "short-regret"
[plant]
kind = "cartpole"
[controller]
kind = "ssi_mpc"
features = 20
learning_rate = { horizon_scaled = 5.0 }
[run]
repeats = 2
seed = 1
"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let study = run_regret(&cfg, dir.path(), &[10, 20, 40], 1).unwrap();
    assert_eq!(study.rows.len(), 6);
    assert_eq!(study.median_regret.len(), 3);
    assert!(study.fit.is_some());
    for row in &study.rows {
        assert!((row.eta - 5.0 / (row.horizon as f64).sqrt()).abs() < 1e-15);
        assert!((row.regret - (row.alg_cost - row.oracle_cost)).abs() < 1e-9);
    }
    let table = Table::read(&dir.path().join("regret.csv")).unwrap();
    assert_eq!(table.rows.len(), 6);
    assert!(dir.path().join("regret_summary.json").is_file());
    assert!(run_regret(&cfg, dir.path(), &[10, 20], 1).is_err());
    assert!(run_regret(&cfg, dir.path(), &[20, 10, 40], 1).is_err());
}

#[test]
fn plots_are_deterministic_and_missing_inputs_are_skipped() {
    let cfg = short_cartpole();
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&cfg, dir.path(), 1).unwrap();
    let kinds = [PlotKind::Error, PlotKind::Prediction, PlotKind::Sweep, PlotKind::Regret];
    let digest = emit_plots(dir.path(), &kinds).unwrap();
    assert_eq!(digest.written, vec!["plots/error.svg", "plots/prediction.svg"]);
    let skipped: Vec<&str> = digest.skipped.iter().map(|s| s.kind).collect();
    assert_eq!(skipped, vec!["sweep", "regret"]);

    let first = fs::read(dir.path().join("plots/error.svg")).unwrap();
    assert!(String::from_utf8(first.clone()).unwrap().starts_with("<svg"));
    emit_plots(dir.path(), &kinds).unwrap();
    assert_eq!(fs::read(dir.path().join("plots/error.svg")).unwrap(), first);

    let digest_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("plots/digest.json")).unwrap()).unwrap();
    assert_eq!(digest_json["skipped"].as_array().unwrap().len(), 2);
}

#[test]
fn plot_kind_parsing() {
    assert_eq!("sweep".parse::<PlotKind>().unwrap(), PlotKind::Sweep);
    assert!("histogram".parse::<PlotKind>().is_err());
    assert!(emit_plots(Path::new("/nonexistent/artifacts"), &[PlotKind::Error]).is_err());
}
