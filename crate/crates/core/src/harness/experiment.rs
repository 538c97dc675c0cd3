//! Seeded Monte-Carlo experiments over one or more operating points.

use serde::{Deserialize, Serialize};

use crate::config::{CsiMode, NetworkMode, SystemConfig};
use crate::error::{Error, Result};
use crate::seed;

use super::trial::{evaluate, Realization, TrialResult};

/// One operating point of a sweep. Everything else comes from the base config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub mode: NetworkMode,
    pub csi: CsiMode,
    pub p_max_w: f64,
}

impl OperatingPoint {
    pub fn of(config: &SystemConfig) -> Self {
        Self { mode: config.mode, csi: config.csi, p_max_w: config.p_max_w }
    }

    pub fn apply(&self, base: &SystemConfig) -> SystemConfig {
        SystemConfig { mode: self.mode, csi: self.csi, p_max_w: self.p_max_w, ..base.clone() }
    }
}

/// Summary statistics of one allocation over the trials of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationStats {
    pub mean_sum_rate: f64,
    /// Sample standard deviation (0 for a single trial).
    pub std_sum_rate: f64,
    pub mean_min_rate: f64,
    /// Per-user rates of every trial, trial-major.
    pub pooled_rates: Vec<f64>,
    /// 5th percentile of `pooled_rates` (nearest rank).
    pub p5_rate: f64,
}

impl AllocationStats {
    pub fn from_reports<'a>(reports: impl Iterator<Item = &'a crate::linkmodel::RateReport>) -> Self {
        let mut sums = Vec::new();
        let mut mins = Vec::new();
        let mut pooled = Vec::new();
        for r in reports {
            sums.push(r.sum_rate);
            mins.push(r.min_rate);
            pooled.extend_from_slice(&r.per_user);
        }
        let mean_sum_rate = mean(&sums);
        Self {
            mean_sum_rate,
            std_sum_rate: sample_std(&sums, mean_sum_rate),
            mean_min_rate: mean(&mins),
            p5_rate: percentile_nearest_rank(&pooled, 5.0),
            pooled_rates: pooled,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64], mean: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Smallest sample with at least `pct` percent of the samples at or below it.
pub fn percentile_nearest_rank(samples: &[f64], pct: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// All trials of one operating point with their aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: SystemConfig,
    pub master_seed: u64,
    pub trials: Vec<TrialResult>,
    pub uniform: AllocationStats,
    pub optimized: AllocationStats,
}

impl ExperimentResult {
    pub fn from_trials(config: SystemConfig, master_seed: u64, trials: Vec<TrialResult>) -> Self {
        let uniform = AllocationStats::from_reports(trials.iter().map(|t| &t.rates_uniform));
        let optimized = AllocationStats::from_reports(trials.iter().map(|t| &t.rates_optimized));
        Self { config, master_seed, trials, uniform, optimized }
    }

    pub fn n_trials(&self) -> usize {
        self.trials.len()
    }

    pub fn point(&self) -> OperatingPoint {
        OperatingPoint::of(&self.config)
    }
}

/// A trial failed; the trials finished before it are kept.
#[derive(Debug, thiserror::Error)]
#[error("trial {trial} failed: {source}")]
pub struct ExperimentError {
    pub trial: usize,
    #[source]
    pub source: Error,
    /// Completed trials in index order, one inner vector per operating point.
    pub partial: Vec<Vec<TrialResult>>,
}

/// `trial_seed = derive(master_seed, trial_index)`.
pub fn trial_seed(master_seed: u64, trial_index: usize) -> u64 {
    seed::derive(master_seed, trial_index as u64)
}

/// Runs `n_trials` trials, each evaluated at every point of `points` on the same realization.
///
/// Trials run on `workers` threads (`0` = all cores); results are ordered by trial index and do
/// not depend on the worker count.
pub fn run_sweep(
    base: &SystemConfig,
    points: &[OperatingPoint],
    master_seed: u64,
    n_trials: usize,
    workers: usize,
) -> std::result::Result<Vec<ExperimentResult>, ExperimentError> {
    let fail = |source| ExperimentError { trial: 0, source, partial: Vec::new() };
    if n_trials == 0 {
        return Err(fail(Error::Config("need at least one trial".into())));
    }
    if points.is_empty() {
        return Err(fail(Error::Config("need at least one operating point".into())));
    }
    let configs: Vec<SystemConfig> = points.iter().map(|p| p.apply(base)).collect();
    for c in &configs {
        c.validate().map_err(fail)?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| fail(Error::Config(format!("thread pool: {e}"))))?;
    let outcomes: Vec<Result<Vec<TrialResult>>> = pool.install(|| {
        use rayon::prelude::*;
        (0..n_trials)
            .into_par_iter()
            .map(|t| {
                let realization = Realization::draw(base, trial_seed(master_seed, t))?;
                configs.iter().map(|c| evaluate(c, &realization, t)).collect()
            })
            .collect()
    });

    let mut per_point: Vec<Vec<TrialResult>> = vec![Vec::with_capacity(n_trials); points.len()];
    for (t, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(results) => {
                for (slot, r) in per_point.iter_mut().zip(results) {
                    slot.push(r);
                }
            }
            Err(source) => return Err(ExperimentError { trial: t, source, partial: per_point }),
        }
    }
    Ok(configs
        .into_iter()
        .zip(per_point)
        .map(|(c, trials)| ExperimentResult::from_trials(c, master_seed, trials))
        .collect())
}

/// Runs `n_trials` trials at the operating point of `config`.
pub fn run_experiment(
    config: &SystemConfig,
    master_seed: u64,
    n_trials: usize,
    workers: usize,
) -> std::result::Result<ExperimentResult, ExperimentError> {
    let mut out = run_sweep(config, &[OperatingPoint::of(config)], master_seed, n_trials, workers)?;
    Ok(out.remove(0))
}
