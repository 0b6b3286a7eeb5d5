//! Artifact files. Every file is written to a temporary sibling and renamed
//! into place, so a reader never sees a partial file at the final path.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use ssimpc::controller::TrajectoryLog;
use tempfile::NamedTempFile;

use crate::error::HarnessError;

pub fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Writes `bytes` to `path` via temp-then-rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    ensure_dir(dir)?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| HarnessError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Serializes rows with a header into CSV bytes.
pub fn csv_bytes(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.into_inner().map_err(|e| csv_error(path, e))
}

/// `t, x0.., u0.., residual0.., l_t, stage_cost, V_t, solver_iters, converged`.
pub fn episode_header(state_dim: usize, input_dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..state_dim).map(|i| format!("x{i}")));
    h.extend((0..input_dim).map(|i| format!("u{i}")));
    h.extend((0..state_dim).map(|i| format!("residual{i}")));
    for name in ["l_t", "stage_cost", "V_t", "solver_iters", "converged"] {
        h.push(name.to_string());
    }
    h
}

pub fn write_episode_csv(
    path: &Path,
    log: &TrajectoryLog<f64>,
    state_dim: usize,
    input_dim: usize,
) -> Result<(), HarnessError> {
    let rows: Vec<Vec<String>> = log
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.t.to_string()];
            row.extend(r.state.iter().map(f64::to_string));
            row.extend(r.input.iter().map(f64::to_string));
            row.extend(r.residual.iter().map(f64::to_string));
            row.push(r.loss.to_string());
            row.push(r.stage_cost.to_string());
            row.push(r.objective.to_string());
            row.push(r.solver_iterations.to_string());
            row.push(r.converged.to_string());
            row
        })
        .collect();
    let bytes = csv_bytes(path, &episode_header(state_dim, input_dim), &rows)?;
    write_atomic(path, &bytes)
}

/// A CSV file as a header plus string rows.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Column `name` parsed as numbers; unparsable cells become NaN.
    pub fn numbers(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column(name)?;
        Some(self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect())
    }
}
