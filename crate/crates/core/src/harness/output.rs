//! CSV and JSON emission.

use std::fmt::Write as _;

use serde::Serialize;

use crate::config::SystemConfig;
use crate::error::{Error, Result};

use super::experiment::{percentile_nearest_rank, ExperimentResult, OperatingPoint};

/// Watts to dBm.
pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}

/// dBW to watts.
pub fn dbw_to_watts(p_dbw: f64) -> f64 {
    10f64.powf(p_dbw / 10.0)
}

fn comparable(config: &SystemConfig) -> SystemConfig {
    let mut c = config.clone();
    c.p_max_w = 1.0;
    c.mode = crate::NetworkMode::Cf;
    c.csi = crate::CsiMode::Estimated;
    c
}

/// Checks that `results` differ only in mode, CSI and power budget and share the master seed.
fn check_consistent(results: &[ExperimentResult]) -> Result<()> {
    let first = results.first().ok_or_else(|| Error::Config("no results to emit".into()))?;
    let reference = comparable(&first.config);
    for r in &results[1..] {
        if comparable(&r.config) != reference {
            return Err(Error::Config(
                "results differ in fields other than mode, csi and p_max_w".into(),
            ));
        }
        if r.master_seed != first.master_seed {
            return Err(Error::Config("results come from different master seeds".into()));
        }
    }
    Ok(())
}

/// Sum-rate curve with columns
/// `p_max_dbm,mode,csi,allocation,mean_sum_rate_bps,std_sum_rate_bps,n_trials`.
pub fn emit_sumrate_curve(results: &[ExperimentResult]) -> Result<String> {
    check_consistent(results)?;
    let mut out =
        String::from("p_max_dbm,mode,csi,allocation,mean_sum_rate_bps,std_sum_rate_bps,n_trials\n");
    for r in results {
        let p = r.point();
        for (name, stats) in [("uniform", &r.uniform), ("optimized", &r.optimized)] {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                watts_to_dbm(p.p_max_w),
                p.mode.as_str(),
                p.csi.as_str(),
                name,
                stats.mean_sum_rate,
                stats.std_sum_rate,
                r.n_trials()
            );
        }
    }
    Ok(out)
}

/// `(rate, ecdf)` steps of the empirical CDF; repeated values collapse into one step.
pub fn ecdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut steps: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (i, &v) in sorted.iter().enumerate() {
        let level = (i + 1) as f64 / n;
        match steps.last_mut() {
            Some(last) if last.0 == v => last.1 = level,
            _ => steps.push((v, level)),
        }
    }
    steps
}

/// Per-user rate CDF with columns `rate_bps,ecdf,mode,csi,allocation`.
///
/// Each series is followed by one footer row whose `ecdf` field reads `p5` and whose rate is
/// the 5th percentile (the 95%-likely rate) of the series.
pub fn emit_rate_cdf(results: &[ExperimentResult]) -> Result<String> {
    check_consistent(results)?;
    let p_max = results[0].config.p_max_w;
    if results.iter().any(|r| r.config.p_max_w != p_max) {
        return Err(Error::Config("a rate CDF needs a single power budget".into()));
    }
    let mut out = String::from("rate_bps,ecdf,mode,csi,allocation\n");
    for r in results {
        let OperatingPoint { mode, csi, .. } = r.point();
        for (name, stats) in [("uniform", &r.uniform), ("optimized", &r.optimized)] {
            for (rate, level) in ecdf(&stats.pooled_rates) {
                let _ = writeln!(out, "{rate},{level},{},{},{name}", mode.as_str(), csi.as_str());
            }
            let p5 = percentile_nearest_rank(&stats.pooled_rates, 5.0);
            let _ = writeln!(out, "{p5},p5,{},{},{name}", mode.as_str(), csi.as_str());
        }
    }
    Ok(out)
}

/// Contents of `run_meta.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub crate_version: &'static str,
    pub master_seed: u64,
    pub n_trials: usize,
    pub config: SystemConfig,
    pub points: Vec<OperatingPoint>,
    pub p_max_dbw: Vec<f64>,
    /// True when the power sweep is the built-in default rather than user supplied.
    pub p_max_sweep_is_default: bool,
    pub notes: Vec<String>,
    pub redraws: u64,
    pub unconverged_runs: usize,
    pub line_search_failures: usize,
    pub safeguard_activations: usize,
}

impl RunMeta {
    pub fn new(
        config: &SystemConfig,
        master_seed: u64,
        n_trials: usize,
        p_max_dbw: &[f64],
        p_max_sweep_is_default: bool,
        results: &[ExperimentResult],
    ) -> Self {
        let mut notes = Vec::new();
        if p_max_sweep_is_default {
            notes.push("p_max sweep is the built-in default range, not a published operating point".into());
        }
        let all = || results.iter().flat_map(|r| &r.trials);
        Self {
            crate_version: env!("CARGO_PKG_VERSION"),
            master_seed,
            n_trials,
            config: config.clone(),
            points: results.iter().map(ExperimentResult::point).collect(),
            p_max_dbw: p_max_dbw.to_vec(),
            p_max_sweep_is_default,
            notes,
            redraws: results.first().map_or(0, |r| r.trials.iter().map(|t| t.redraws).sum()),
            unconverged_runs: all().filter(|t| !t.converged).count(),
            line_search_failures: all().map(|t| t.line_search_failures).sum(),
            safeguard_activations: all().map(|t| t.safeguard_activations).sum(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(format!("run meta: {e}")))
    }
}
