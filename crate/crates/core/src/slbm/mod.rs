//! Successive lower-bound maximization (SLBM) for downlink power control.
//!
//! The powers of one AP form a block. For each block the rate of every user is minorized by
//! keeping `g1` and linearizing `g2` at the current block point; the resulting subproblem is
//! maximized over the AP's capped simplex, the minorant is re-expanded at the solution, and the
//! blocks are swept in order `m = 0..M` until the objective stops improving.

mod optimize;
mod projection;
mod subproblem;
mod verify;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use optimize::{optimize, optimize_maxmin, optimize_sumrate, OptOutcome, OptTrace, TraceEntry};
pub use projection::project_capped_simplex;
pub use subproblem::{
    solve_subproblem_maxmin, solve_subproblem_sumrate, SubSolution, Subproblem,
};
pub use verify::{verify_bound_properties, BoundReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    SumRate,
    MaxMin,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::SumRate => "sumrate",
            Objective::MaxMin => "maxmin",
        }
    }

    /// Scalar objective of a vector of per-user rates.
    pub fn of(self, rates: &[f64]) -> f64 {
        match self {
            Objective::SumRate => rates.iter().sum(),
            Objective::MaxMin => rates.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sumrate" => Ok(Objective::SumRate),
            "maxmin" => Ok(Objective::MaxMin),
            other => Err(Error::Parse(format!(
                "unknown objective `{other}` (expected sumrate|maxmin)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockGranularity {
    /// One block per AP.
    Ap,
    /// One block per served (user, AP) pair.
    Scalar,
}

/// Tolerances, caps and step-rule parameters of the optimizer.
///
/// Tolerances are relative to the objective; `pg_tol` is measured on powers normalized by
/// `P_max` and rates normalized by the bandwidth (bit/s/Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub pg_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub max_pg: usize,
    /// Power floor as a fraction of `P_max`.
    pub eps_floor_rel: f64,
    /// First trial move of projected gradient, as a fraction of `P_max`.
    pub initial_step: f64,
    pub backtrack: f64,
    /// Sufficient-increase constant of the Armijo rule.
    pub armijo: f64,
    pub max_backtracks: usize,
    pub block_granularity: BlockGranularity,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            outer_tol: 1e-4,
            inner_tol: 1e-4,
            pg_tol: 1e-6,
            max_outer: 200,
            max_inner: 20,
            max_pg: 500,
            eps_floor_rel: 1e-12,
            initial_step: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
            max_backtracks: 60,
            block_granularity: BlockGranularity::Ap,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let tolerances = [
            ("outer_tol", self.outer_tol),
            ("inner_tol", self.inner_tol),
            ("pg_tol", self.pg_tol),
            ("eps_floor_rel", self.eps_floor_rel),
            ("initial_step", self.initial_step),
            ("armijo", self.armijo),
        ];
        for (name, v) in tolerances {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("backtrack must lie in (0, 1)".into()));
        }
        if self.armijo >= 1.0 {
            return Err(Error::Config("armijo must be below 1".into()));
        }
        for (name, v) in [
            ("max_outer", self.max_outer),
            ("max_inner", self.max_inner),
            ("max_pg", self.max_pg),
            ("max_backtracks", self.max_backtracks),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}
