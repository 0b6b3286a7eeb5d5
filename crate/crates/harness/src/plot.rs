//! Self-contained SVG line plots of run artifacts. Output depends only on
//! the artifact contents (no timestamps), so equal inputs give equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use ssimpc::metrics::sublinearity_slope;

use crate::error::HarnessError;
use crate::output::{write_atomic, write_json, Table};
use crate::runner::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// `‖x_t‖²` against time for every episode.
    Error,
    /// Estimation loss `l_t` against time for every episode.
    Prediction,
    /// Median cumulative error against M, one line per η.
    Sweep,
    /// Median regret against horizon on log-log axes with a fitted line.
    Regret,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Error => "error",
            PlotKind::Prediction => "prediction",
            PlotKind::Sweep => "sweep",
            PlotKind::Regret => "regret",
        }
    }
}

impl FromStr for PlotKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "error" => Ok(PlotKind::Error),
            "prediction" => Ok(PlotKind::Prediction),
            "sweep" => Ok(PlotKind::Sweep),
            "regret" => Ok(PlotKind::Regret),
            other => Err(HarnessError::Config(format!(
                "unknown plot kind `{other}` (expected error, prediction, sweep, regret)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlotDigest {
    pub written: Vec<String>,
    pub skipped: Vec<SkippedPlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedPlot {
    pub kind: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub markers: bool,
    pub dashed: bool,
}

impl Series {
    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
            markers: false,
            dashed: false,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let vals: Vec<f64> = values
            .filter(|v| v.is_finite() && (!log || *v > 0.0))
            .map(|v| if log { v.log10() } else { v })
            .collect();
        let (mut lo, mut hi) = vals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if lo.abs() > 0.0 { lo.abs() * 0.1 } else { 1.0 };
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, log }
    }

    fn map(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let v = if self.log { v.log10() } else { v };
        Some((v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
            let decades: Vec<f64> = (a..=b)
                .map(|e| 10f64.powi(e))
                .filter(|v| self.map(*v).is_some_and(|p| (-1e-9..=1.0 + 1e-9).contains(&p)))
                .collect();
            if decades.len() >= 2 {
                return decades;
            }
            return (0..=4)
                .map(|i| 10f64.powf(self.lo + (self.hi - self.lo) * i as f64 / 4.0))
                .collect();
        }
        (0..=4)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0)
            .collect()
    }
}

impl Figure {
    pub fn render(&self) -> String {
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let xa = Axis::new(
            self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
            self.log_x,
        );
        let ya = Axis::new(
            self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
            self.log_y,
        );
        let px = |v: f64| xa.map(v).map(|f| LEFT + f * pw);
        let py = |v: f64| ya.map(v).map(|f| TOP + (1.0 - f) * ph);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
        );
        for t in xa.ticks() {
            if let Some(x) = px(t) {
                let _ = writeln!(
                    s,
                    r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                    TOP + ph,
                    TOP + ph + 16.0,
                    fmt_tick(t)
                );
            }
        }
        for t in ya.ticks() {
            if let Some(y) = py(t) {
                let _ = writeln!(
                    s,
                    r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                    LEFT + pw,
                    LEFT - 6.0,
                    y + 4.0,
                    fmt_tick(t)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 18.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<(f64, f64)> = series
                .points
                .iter()
                .filter_map(|&(x, y)| Some((px(x)?, py(y)?)))
                .collect();
            if pts.len() > 1 {
                let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let dash = if series.dashed {
                    r#" stroke-dasharray="6 4""#
                } else {
                    ""
                };
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                    path.join(" ")
                );
            }
            if series.markers || pts.len() == 1 {
                for (x, y) in &pts {
                    let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{color}"/>"#);
                }
            }
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
                ly - 4.0,
                lx + 20.0,
                ly - 4.0,
                lx + 26.0,
                escape(&series.name)
            );
        }
        if let Some(note) = &self.note {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="13">{}</text>"#,
                LEFT + 10.0,
                TOP + 18.0,
                escape(note)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn episode_files(artifacts: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = artifacts.join("episodes");
    let Ok(entries) = fs::read_dir(&dir) else {
        return Ok(Vec::new());
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn time_series(artifacts: &Path, kind: PlotKind) -> Result<Figure, String> {
    let files = episode_files(artifacts).map_err(|e| e.to_string())?;
    let mut series = Vec::new();
    for f in files {
        let table = Table::read(&f).map_err(|e| e.to_string())?;
        let Some(t) = table.numbers("t") else { continue };
        let y: Vec<f64> = match kind {
            PlotKind::Prediction => match table.numbers("l_t") {
                Some(v) => v,
                None => continue,
            },
            _ => {
                let cols: Vec<usize> = table
                    .header
                    .iter()
                    .enumerate()
                    .filter(|(_, h)| h.starts_with('x') && h[1..].parse::<usize>().is_ok())
                    .map(|(i, _)| i)
                    .collect();
                table
                    .rows
                    .iter()
                    .map(|r| {
                        cols.iter()
                            .map(|&i| r[i].parse::<f64>().unwrap_or(f64::NAN).powi(2))
                            .sum()
                    })
                    .collect()
            }
        };
        if !t.is_empty() {
            series.push(Series::line(stem(&f), t.into_iter().zip(y).collect()));
        }
    }
    if series.is_empty() {
        return Err("no episode CSVs found".into());
    }
    let (title, y_label) = match kind {
        PlotKind::Prediction => ("Prediction error", "l_t"),
        _ => ("Stabilization error", "|x_t|^2"),
    };
    Ok(Figure {
        title: title.into(),
        x_label: "step t".into(),
        y_label: y_label.into(),
        series,
        ..Figure::default()
    })
}

fn sweep_figure(artifacts: &Path) -> Result<Figure, String> {
    let path = artifacts.join("sweep_summary.csv");
    if !path.exists() {
        return Err("sweep_summary.csv not found".into());
    }
    let table = Table::read(&path).map_err(|e| e.to_string())?;
    let (Some(m), Some(eta), Some(err), Some(failed)) = (
        table.numbers("M"),
        table.numbers("eta"),
        table.numbers("cumulative_state_error"),
        table.column("failed"),
    ) else {
        return Err("sweep_summary.csv lacks expected columns".into());
    };
    let mut etas: Vec<f64> = eta.clone();
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    let mut ms: Vec<f64> = m.clone();
    ms.sort_by(f64::total_cmp);
    ms.dedup();
    let mut series = Vec::new();
    for e in etas {
        let points: Vec<(f64, f64)> = ms
            .iter()
            .map(|&mv| {
                let vals: Vec<f64> = (0..m.len())
                    .filter(|&i| m[i] == mv && eta[i] == e && table.rows[i][failed] != "true")
                    .map(|i| err[i])
                    .collect();
                (mv, median(&vals))
            })
            .collect();
        let mut s = Series::line(format!("eta = {e}"), points);
        s.markers = true;
        series.push(s);
    }
    if series.is_empty() {
        return Err("sweep summary is empty".into());
    }
    Ok(Figure {
        title: "Cumulative error across the sweep".into(),
        x_label: "features M".into(),
        y_label: "median cumulative |x|^2".into(),
        series,
        ..Figure::default()
    })
}

fn regret_figure(artifacts: &Path) -> Result<Figure, String> {
    let path = artifacts.join("regret.csv");
    if !path.exists() {
        return Err("regret.csv not found".into());
    }
    let table = Table::read(&path).map_err(|e| e.to_string())?;
    let (Some(h), Some(reg), Some(failed)) = (
        table.numbers("horizon"),
        table.numbers("regret"),
        table.column("failed"),
    ) else {
        return Err("regret.csv lacks expected columns".into());
    };
    let mut hs = h.clone();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    let med: Vec<f64> = hs
        .iter()
        .map(|&t| {
            median(
                &(0..h.len())
                    .filter(|&i| h[i] == t && table.rows[i][failed] != "true")
                    .map(|i| reg[i])
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let mut measured = Series::line("median regret", hs.iter().copied().zip(med.iter().copied()).collect());
    measured.markers = true;
    let mut series = vec![measured];
    let mut note = None;
    if hs.len() >= 3 && med.iter().all(|v| v.is_finite()) {
        if let Ok(fit) = sublinearity_slope(&hs, &med) {
            let line: Vec<(f64, f64)> = hs
                .iter()
                .map(|&t| (t, (fit.intercept + fit.exponent * t.ln()).exp()))
                .collect();
            let mut s = Series::line(format!("fit p = {:.3}", fit.exponent), line);
            s.dashed = true;
            series.push(s);
            note = Some(format!(
                "fitted exponent p = {:.3}{}",
                fit.exponent,
                if fit.floored {
                    " (nonpositive values floored)"
                } else {
                    ""
                }
            ));
        }
    }
    Ok(Figure {
        title: "Regret against clairvoyant MPC".into(),
        x_label: "horizon T".into(),
        y_label: "regret".into(),
        log_x: true,
        log_y: true,
        series,
        note,
    })
}

/// Writes `plots/<kind>.svg` for every requested kind and a digest of what
/// was written or skipped.
pub fn emit_plots(artifacts: &Path, kinds: &[PlotKind]) -> Result<PlotDigest, HarnessError> {
    if !artifacts.is_dir() {
        return Err(HarnessError::Artifact {
            path: artifacts.to_path_buf(),
            message: "artifact directory does not exist".into(),
        });
    }
    let mut digest = PlotDigest::default();
    for &kind in kinds {
        let figure = match kind {
            PlotKind::Error | PlotKind::Prediction => time_series(artifacts, kind),
            PlotKind::Sweep => sweep_figure(artifacts),
            PlotKind::Regret => regret_figure(artifacts),
        };
        match figure {
            Ok(fig) => {
                let rel = format!("plots/{}.svg", kind.name());
                write_atomic(&artifacts.join(&rel), fig.render().as_bytes())?;
                digest.written.push(rel);
            }
            Err(reason) => digest.skipped.push(SkippedPlot {
                kind: kind.name(),
                reason,
            }),
        }
    }
    write_json(&artifacts.join("plots/digest.json"), &digest)?;
    Ok(digest)
}
