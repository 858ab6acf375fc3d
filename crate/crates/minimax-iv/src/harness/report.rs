//! Sweep reports: per-cell summaries, fitted rate slopes, and the CSV /
//! JSON emitters.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Aggregates for one (estimator, n) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub estimator: String,
    pub n: usize,
    /// Replications requested.
    pub reps: usize,
    /// Replications that produced a fit; summary statistics cover these.
    pub completed: usize,
    pub l2_mean: f64,
    pub l2_median: f64,
    pub l2_q25: f64,
    pub l2_q75: f64,
    pub proj_mse_mean: f64,
    pub proj_mse_median: f64,
    /// Finite-sample bound violations observed in this cell.
    pub violations: usize,
    /// Replications whose screened candidate set contained the truth
    /// (two-stage estimator only; equals completed otherwise irrelevant 0).
    pub truth_in_candidates: usize,
}

/// One fitted log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub estimator: String,
    /// Which aggregate the slope was fitted on, e.g. "l2_mean" or
    /// "proj_mse_mean"; "log" variants average logs before fitting.
    pub metric: String,
    pub slope: f64,
    pub stderr: f64,
}

/// Full outcome of a rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub config_hash: u64,
    pub master_seed: u64,
    pub cells: Vec<RateCell>,
    pub slopes: Vec<SlopeRow>,
}

impl RateReport {
    pub fn cell(&self, estimator: &str, n: usize) -> Option<&RateCell> {
        self.cells.iter().find(|c| c.estimator == estimator && c.n == n)
    }

    pub fn slope(&self, estimator: &str, metric: &str) -> Option<&SlopeRow> {
        self.slopes.iter().find(|s| s.estimator == estimator && s.metric == metric)
    }

    pub fn total_violations(&self) -> usize {
        self.cells.iter().map(|c| c.violations).sum()
    }
}

/// Ordinary least squares of log(value) on log(n). Returns (slope,
/// standard error); the standard error is 0 when there are no residual
/// degrees of freedom.
pub fn fit_loglog_slope(points: &[(usize, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::RateData(format!("need >= 2 points, got {}", points.len())));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(n, v) in points {
        if n == 0 || !(v.is_finite() && v > 0.0) {
            return Err(Error::RateData(format!("nonpositive point (n = {n}, value = {v})")));
        }
        xs.push((n as f64).ln());
        ys.push(v.ln());
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::RateData("all n values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let df = points.len() as f64 - 2.0;
    let stderr = if df > 0.0 { (rss / df / sxx).sqrt() } else { 0.0 };
    Ok((slope, stderr))
}

/// Linearly interpolated quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&q));
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Exact CSV schema emitted for rate sweeps.
pub const CSV_HEADER: &str = "estimator,n,reps,l2_mean,l2_median,proj_mse_mean,violations";

/// Renders the summary CSV (one row per estimator x n).
pub fn render_csv(report: &RateReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in &report.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.estimator, c.n, c.reps, c.l2_mean, c.l2_median, c.proj_mse_mean, c.violations
        ));
    }
    out
}

/// Writes `rates.csv` and `rates.json` under `out_dir`, returning the
/// written paths. The JSON file round-trips to the in-memory report.
pub fn emit_reports(report: &RateReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("rates.csv");
    let json_path = out_dir.join("rates.json");
    let mut csv = std::fs::File::create(&csv_path)?;
    csv.write_all(render_csv(report).as_bytes())?;
    let mut json = std::fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut json, report)?;
    json.write_all(b"\n")?;
    Ok(vec![csv_path, json_path])
}

pub fn load_report(path: &Path) -> Result<RateReport> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Concatenates reports produced under the same config hash and master
/// seed; refuses mixed provenance.
pub fn merge_rate_reports(reports: Vec<RateReport>) -> Result<RateReport> {
    let Some(first) = reports.first() else {
        return Err(Error::RateData("no reports to merge".into()));
    };
    let hash = first.config_hash;
    let seed = first.master_seed;
    if reports.iter().any(|r| r.config_hash != hash || r.master_seed != seed) {
        return Err(Error::Config("refusing to merge reports with mismatched config hashes".into()));
    }
    let mut cells = Vec::new();
    let mut slopes = Vec::new();
    for r in reports {
        cells.extend(r.cells);
        slopes.extend(r.slopes);
    }
    Ok(RateReport { config_hash: hash, master_seed: seed, cells, slopes })
}
