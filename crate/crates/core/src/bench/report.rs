//! Run reports, manifests and trajectory CSV output.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::oracle::{LyapunovReport, ResidualFit};
use crate::optimizer::{StopReason, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    CheckFailure,
    Diverged,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::CheckFailure => 1,
            Outcome::Diverged => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Diverged,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub id: String,
    /// `euler`, `heun`, `exact_gd` or `fd_gd`.
    pub method: String,
    pub baseline: bool,
    pub h: f64,
    pub seed: u64,
    pub steps: usize,
    pub status: RunStatus,
    pub stop: Option<StopReason>,
    pub diverged_at: Option<usize>,
    pub divergence_reason: Option<String>,
    pub csv: String,
    pub evals: u64,
    pub final_x: Vec<f64>,
    pub final_y: Vec<f64>,
    pub final_filtered_error: Option<f64>,
    pub limit_band: Option<f64>,
    pub iterations_to_band: Option<usize>,
    pub tail_std: Option<f64>,
    pub lyapunov: Option<LyapunovReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub method: String,
    pub seed: u64,
    pub h: f64,
    pub limit_band: Option<f64>,
    pub iterations_to_band: Option<usize>,
    pub evals: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderRow {
    pub case: String,
    pub dim: usize,
    /// Base-point index, or `None` for the constant-objective check.
    pub point: Option<usize>,
    pub fit: ResidualFit,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub order: Vec<OrderRow>,
}

/// Everything a command produced. Serialized as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub rng_algorithm: &'static str,
    pub config: serde_json::Value,
    pub output_dir: String,
    pub runs: Vec<RunSummary>,
    pub checks: Vec<CheckResult>,
    pub sweep: Option<Vec<SweepRow>>,
    pub verify: Option<VerifySummary>,
    pub outcome: Outcome,
}

impl RunReport {
    pub fn settle_outcome(&mut self) {
        self.outcome = if self.runs.iter().any(|r| r.status == RunStatus::Diverged) {
            Outcome::Diverged
        } else if self.checks.iter().any(|c| !c.passed) {
            Outcome::CheckFailure
        } else {
            Outcome::Pass
        };
    }

    pub fn write_manifest(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        write_atomic(&dir.join("manifest.json"), text.as_bytes())
    }
}

/// Fixed 17-significant-digit scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Columns: `k, x0..x{n-1}, y0..y{n-1}, J, phase, coord, evals`. Baseline rows
/// carry `-` in the phase and coordinate columns.
pub fn trajectory_csv(traj: &Trajectory, stride: usize) -> String {
    let n = traj.dim();
    let mut out = String::new();
    let mut header = vec!["k".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..n).map(|i| format!("y{i}")));
    header.extend(["J", "phase", "coord", "evals"].map(String::from));
    out.push_str(&header.join(","));
    out.push('\n');
    let last = traj.len().saturating_sub(1);
    for i in (0..traj.len()).filter(|&i| i % stride.max(1) == 0 || i == last) {
        let mut row = vec![traj.k[i].to_string()];
        row.extend(traj.x[i].iter().map(|v| fmt_f64(*v)));
        row.extend(traj.y[i].iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(traj.values[i]));
        match traj.labels[i] {
            Some(l) => {
                row.push(l.phase.to_string());
                row.push(l.coord.to_string());
            }
            None => {
                row.push("-".into());
                row.push("-".into());
            }
        }
        row.push(traj.evals[i].to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method,seed,h,limit_band,iterations_to_band,evals\n");
    for r in rows {
        let band = r.limit_band.map_or_else(|| "-".to_string(), fmt_f64);
        let itb = r.iterations_to_band.map_or_else(|| "-".to_string(), |v| v.to_string());
        out.push_str(&format!("{},{},{},{band},{itb},{}\n", r.method, r.seed, fmt_f64(r.h), r.evals));
    }
    out
}

pub fn order_csv(rows: &[OrderRow]) -> String {
    let mut out = String::from("case,dim,point,slope,r_squared,exact_cancellation,passed\n");
    for r in rows {
        let point = r.point.map_or_else(|| "const".to_string(), |p| p.to_string());
        out.push_str(&format!(
            "{},{},{point},{},{},{},{}\n",
            r.case,
            r.dim,
            fmt_f64(r.fit.slope),
            fmt_f64(r.fit.r_squared),
            r.fit.exact_cancellation,
            r.passed
        ));
    }
    out
}
