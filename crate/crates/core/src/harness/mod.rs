//! Monte-Carlo experiments: trials, sweeps over operating points and their CSV/JSON output.

mod experiment;
mod output;
mod trial;

pub use experiment::{
    percentile_nearest_rank, run_experiment, run_sweep, trial_seed, AllocationStats,
    ExperimentError, ExperimentResult, OperatingPoint,
};
pub use output::{dbw_to_watts, ecdf, emit_rate_cdf, emit_sumrate_curve, watts_to_dbm, RunMeta};
pub use trial::{evaluate, run_trial, Realization, TrialResult, MAX_REDRAWS};
