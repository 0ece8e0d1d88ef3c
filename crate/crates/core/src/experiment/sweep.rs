//! (K, seed) sweeps: CSV rows, determinism hash, rate fit and bound coverage.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::exec;
use crate::experiment::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::experiment::harness::{run_cell, stage_classes, CellSetup, RunRecord};

pub const CSV_HEADER: &str = "scenario,K,seed,gap,bound_rhs,pess_viol,sandwich_viol,eps,kappa,ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub error: String,
}

/// Least-squares line through `(ln K, ln median)`; zero medians are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub points_used: usize,
    pub zero_medians: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    #[serde(rename = "K")]
    pub k: usize,
    pub runs: usize,
    pub median_gap: f64,
    pub mean_gap: f64,
    /// fraction with `gap <= bound_rhs` (multiplier 1)
    pub raw_bound_fraction: f64,
    /// fraction with `gap <= c bound_rhs` for the fitted `c`
    pub fitted_bound_fraction: f64,
    pub pessimism_clean: f64,
    pub sandwich_clean: f64,
    pub premise_held: usize,
    pub decomposition_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFit {
    #[serde(rename = "fit_K")]
    pub fit_k: usize,
    /// smallest `c` covering every run at `fit_K`
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub scenario: String,
    pub behavior: String,
    pub class: String,
    pub profile: String,
    pub cells: usize,
    pub failures: Vec<CellFailure>,
    pub per_k: Vec<KSummary>,
    pub rate: RateFit,
    pub bound: BoundFit,
    pub determinism_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub records: Vec<RunRecord>,
    pub summary: SweepSummary,
}

impl SweepReport {
    pub fn csv(&self) -> String {
        records_csv(&self.records, true)
    }
}

/// CSV with the fixed header; `with_ms = false` drops the wall-time column.
pub fn records_csv(records: &[RunRecord], with_ms: bool) -> String {
    let mut out = String::new();
    if with_ms {
        out.push_str(CSV_HEADER);
    } else {
        out.push_str(CSV_HEADER.trim_end_matches(",ms"));
    }
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{},{},{},{},{},{},{},{}", r.scenario, r.k, r.seed, r.gap, r.bound_rhs, r.pess_viol, r.sandwich_viol, r.eps, r.kappa);
        if with_ms {
            let _ = write!(out, ",{:.3}", r.ms);
        }
        out.push('\n');
    }
    out
}

/// SHA-256 of the CSV without the wall-time column.
pub fn determinism_hash(records: &[RunRecord]) -> String {
    hex::encode(Sha256::digest(records_csv(records, false).as_bytes()))
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fit `ln y = a + b ln K` over the points with `y > 0`.
pub fn fit_rate(points: &[(usize, f64)]) -> RateFit {
    let used: Vec<(f64, f64)> = points.iter().filter(|(_, y)| *y > 0.0).map(|&(k, y)| ((k as f64).ln(), y.ln())).collect();
    let zero_medians = points.len() - used.len();
    let n = used.len() as f64;
    let mx = used.iter().map(|p| p.0).sum::<f64>() / n;
    let my = used.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if used.len() < 2 || sxx <= 0.0 {
        return RateFit { slope: None, intercept: None, points_used: used.len(), zero_medians };
    }
    let slope = used.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    RateFit { slope: Some(slope), intercept: Some(my - slope * mx), points_used: used.len(), zero_medians }
}

/// Smallest `c` with `gap <= c rhs` on every record.
pub fn fit_bound_constant(records: &[&RunRecord]) -> f64 {
    records.iter().filter(|r| r.bound_rhs > 0.0).map(|r| r.gap.max(0.0) / r.bound_rhs).fold(0.0, f64::max)
}

fn fraction(records: &[&RunRecord], pred: impl Fn(&RunRecord) -> bool) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    records.iter().filter(|r| pred(r)).count() as f64 / records.len() as f64
}

/// Slack on the bound comparison so `c` fitted on a run still covers it.
const BOUND_TOL: f64 = 1e-12;

pub fn summarize(config: &ExperimentConfig, records: &[RunRecord], failures: Vec<CellFailure>) -> SweepSummary {
    let mut ks = config.k_values.clone();
    ks.sort_unstable();
    ks.dedup();
    let at = |k: usize| records.iter().filter(|r| r.k == k).collect::<Vec<_>>();
    let fit_k = config.bound_fit_k();
    let c = fit_bound_constant(&at(fit_k));
    let per_k: Vec<KSummary> = ks
        .iter()
        .map(|&k| {
            let rs = at(k);
            let gaps: Vec<f64> = rs.iter().map(|r| r.gap).collect();
            KSummary {
                k,
                runs: rs.len(),
                median_gap: median(&gaps),
                mean_gap: gaps.iter().sum::<f64>() / gaps.len().max(1) as f64,
                raw_bound_fraction: fraction(&rs, |r| r.gap <= r.bound_rhs + BOUND_TOL),
                fitted_bound_fraction: fraction(&rs, |r| r.gap <= c * r.bound_rhs + BOUND_TOL),
                pessimism_clean: fraction(&rs, |r| r.pess_viol == 0),
                sandwich_clean: fraction(&rs, |r| r.sandwich_viol == 0),
                premise_held: rs.iter().filter(|r| r.decomposition.premise).count(),
                decomposition_violations: rs.iter().filter(|r| r.decomposition.premise && !r.decomposition.holds()).count(),
            }
        })
        .collect();
    let rate = fit_rate(&per_k.iter().filter(|s| s.runs > 0).map(|s| (s.k, s.median_gap)).collect::<Vec<_>>());
    SweepSummary {
        schema_version: SCHEMA_VERSION,
        scenario: config.scenario.label(),
        behavior: config.behavior.label(),
        class: config.class.label().to_string(),
        profile: serde_json::to_value(config.profile).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        cells: ks.len() * config.seeds.len(),
        failures,
        per_k,
        rate,
        bound: BoundFit { fit_k, c },
        determinism_hash: determinism_hash(records),
    }
}

/// Run every (K, seed) cell; rows come back sorted by (K, seed).
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let mdp = config.scenario.build()?;
    let behavior = config.behavior.build(&mdp)?;
    let classes = stage_classes(&config.class, &mdp)?;
    let planner = config.planner();
    let label = config.scenario.label();
    let setup = CellSetup { scenario: &label, mdp: &mdp, behavior: &behavior, classes: &classes, config: &planner };
    let mut ks = config.k_values.clone();
    ks.sort_unstable();
    ks.dedup();
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let cells: Vec<(usize, u64)> = ks.iter().flat_map(|&k| seeds.iter().map(move |&s| (k, s))).collect();
    let results = exec::map(config.execution, &cells, |&(k, seed)| run_cell(&setup, k, seed).map(|o| o.record));
    let mut records = Vec::with_capacity(cells.len());
    let mut failures = Vec::new();
    for (&(k, seed), r) in cells.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(CellFailure { k, seed, error: e.to_string() }),
        }
    }
    let summary = summarize(config, &records, failures);
    Ok(SweepReport { records, summary })
}
