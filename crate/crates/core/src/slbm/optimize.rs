//! Outer block-alternating loop shared by the sum-rate and max-min algorithms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linkmodel::{BlockRates, PowerMatrix, RateModel};

use super::subproblem::{solve_scalar, solve_subproblem_maxmin, solve_subproblem_sumrate, Subproblem};
use super::{BlockGranularity, Objective, OptimizerOptions};

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Outer sweep index; the initial point is recorded with sweep 0.
    pub outer: usize,
    /// AP index in per-AP mode, `m * K + k` in per-scalar mode; `M` (resp. `M * K`) marks the
    /// initial point and the final clean-up step.
    pub block: usize,
    /// True objective (sum-rate or min-rate, bit/s).
    pub objective: f64,
    /// Largest constraint violation of the iterate.
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub entries: Vec<TraceEntry>,
}

impl OptTrace {
    /// CSV with columns `iteration,block,objective,residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,block,objective,residual\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{}", e.outer, e.block, e.objective, e.residual);
        }
        out
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.entries.last().map(|e| e.objective)
    }

    /// Largest relative decrease between consecutive entries (0 for a monotone trace).
    pub fn worst_decrease(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| (w[0].objective - w[1].objective) / w[0].objective.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptOutcome {
    pub power: PowerMatrix,
    pub trace: OptTrace,
    pub converged: bool,
    pub outer_iterations: usize,
    /// Relative objective change over the last sweep.
    pub last_relative_change: f64,
    /// Subproblems whose line search gave up before reaching stationarity.
    pub line_search_failures: usize,
    /// Subproblem solutions that lowered the true objective and were pulled back toward the
    /// expansion point.
    pub safeguard_activations: usize,
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old) / old.abs().max(f64::MIN_POSITIVE)
}

struct Run<'a, 'o> {
    model: RateModel<'a>,
    kind: Objective,
    p_max: f64,
    eps_floor: f64,
    opts: &'o OptimizerOptions,
    eta: PowerMatrix,
    trace: OptTrace,
    line_search_failures: usize,
    safeguard_activations: usize,
}

impl Run<'_, '_> {
    fn record(&mut self, outer: usize, block: usize, objective: f64) {
        let residual = self.eta.feasibility_residual(self.model.gains.clusters(), self.p_max);
        self.trace.entries.push(TraceEntry { outer, block, objective, residual });
    }

    /// Accepts `x1` if it does not lower the true objective; otherwise halves the move toward
    /// `x0` until it does, falling back to `x0`.
    fn safeguard(&mut self, block: &BlockRates, x0: &[f64], f0: f64, x1: Vec<f64>) -> Result<(Vec<f64>, f64)> {
        let mut t = 1.0;
        for attempt in 0..40 {
            let xt: Vec<f64> = if attempt == 0 {
                x1.clone()
            } else {
                x0.iter().zip(&x1).map(|(a, b)| a + t * (b - a)).collect()
            };
            let f = self.kind.of(&block.rates(&xt)?);
            if f >= f0 {
                if attempt > 0 {
                    self.safeguard_activations += 1;
                }
                return Ok((xt, f));
            }
            t *= 0.5;
        }
        self.safeguard_activations += 1;
        Ok((x0.to_vec(), f0))
    }

    /// Sequential minorant maximization on one block (or one coordinate of it).
    fn sweep_block(&mut self, outer: usize, ap: usize, coord: Option<usize>) -> Result<()> {
        let block = BlockRates::new(self.model, &self.eta, ap)?;
        if block.members().is_empty() {
            return Ok(());
        }
        let mut x = block.current(&self.eta);
        let mut f = self.kind.of(&block.rates(&x)?);
        let block_id = match coord {
            None => ap,
            Some(i) => ap * self.model.gains.num_users() + block.members()[i],
        };
        for _ in 0..self.opts.max_inner {
            let sub = Subproblem::new(&block, &x, self.p_max, self.eps_floor)?;
            let sol = match (coord, self.kind) {
                (Some(i), kind) => solve_scalar(&sub, kind, i, 1e-10)?,
                (None, Objective::SumRate) => solve_subproblem_sumrate(&sub, self.opts)?,
                (None, Objective::MaxMin) => solve_subproblem_maxmin(&sub, self.opts)?,
            };
            if sol.line_search_failed {
                self.line_search_failures += 1;
            }
            let (x_new, f_new) = self.safeguard(&block, &x, f, sol.x)?;
            if x_new == x {
                break;
            }
            let change = relative_change(f_new, f);
            x = x_new;
            f = f_new;
            block.write(&mut self.eta, &x);
            self.record(outer, block_id, f);
            if change <= self.opts.inner_tol {
                break;
            }
        }
        Ok(())
    }

    fn objective(&self, eta: &PowerMatrix) -> Result<f64> {
        Ok(self.kind.of(&self.model.rates(eta)?.per_user))
    }
}

/// Block-alternating SLBM for `kind`, starting from `init`.
pub fn optimize(
    model: RateModel,
    kind: Objective,
    p_max: f64,
    init: &PowerMatrix,
    opts: &OptimizerOptions,
) -> Result<OptOutcome> {
    opts.validate()?;
    let clusters = model.gains.clusters();
    let eps_floor = opts.eps_floor_rel * p_max;
    if init.feasibility_residual(clusters, p_max) > 1e-12 * p_max {
        return Err(Error::Domain("initial power allocation is infeasible".into()));
    }
    let eta = init.clone();
    for (m, set) in clusters.served_by_ap.iter().enumerate() {
        for &k in set {
            if eta.get(k, m) < eps_floor {
                return Err(Error::Domain(format!(
                    "initial power of user {k} at AP {m} is below the floor {eps_floor:e}"
                )));
            }
        }
    }
    let num_aps = clusters.num_aps();
    let num_users = clusters.num_users();
    let marker = match opts.block_granularity {
        BlockGranularity::Ap => num_aps,
        BlockGranularity::Scalar => num_aps * num_users,
    };
    let mut run = Run {
        model,
        kind,
        p_max,
        eps_floor,
        opts,
        eta,
        trace: OptTrace::default(),
        line_search_failures: 0,
        safeguard_activations: 0,
    };
    let mut current = run.objective(&run.eta)?;
    run.record(0, marker, current);

    let mut converged = false;
    let mut outer_iterations = 0;
    let mut last_change = f64::INFINITY;
    for outer in 0..opts.max_outer {
        let start = current;
        for ap in 0..num_aps {
            match opts.block_granularity {
                BlockGranularity::Ap => run.sweep_block(outer, ap, None)?,
                BlockGranularity::Scalar => {
                    for i in 0..clusters.served_by_ap[ap].len() {
                        run.sweep_block(outer, ap, Some(i))?;
                    }
                }
            }
        }
        current = run.trace.final_objective().unwrap_or(start);
        outer_iterations = outer + 1;
        last_change = relative_change(current, start);
        if last_change <= opts.outer_tol {
            converged = true;
            break;
        }
    }

    // Entries sitting at the floor are switched off if that does not cost objective.
    let snap_below = 10.0 * eps_floor;
    let mut snapped = run.eta.clone();
    let mut changed = false;
    for v in snapped.eta.iter_mut() {
        if *v > 0.0 && *v < snap_below {
            *v = 0.0;
            changed = true;
        }
    }
    if changed {
        let f = run.objective(&snapped)?;
        let before = run.objective(&run.eta)?;
        if f >= before {
            run.eta = snapped;
            run.record(outer_iterations.saturating_sub(1), marker, f);
        }
    }

    Ok(OptOutcome {
        power: run.eta,
        trace: run.trace,
        converged,
        outer_iterations,
        last_relative_change: last_change,
        line_search_failures: run.line_search_failures,
        safeguard_activations: run.safeguard_activations,
    })
}

/// Sum-rate maximization.
pub fn optimize_sumrate(model: RateModel, p_max: f64, init: &PowerMatrix, opts: &OptimizerOptions) -> Result<OptOutcome> {
    optimize(model, Objective::SumRate, p_max, init, opts)
}

/// Minimum-rate maximization.
pub fn optimize_maxmin(model: RateModel, p_max: f64, init: &PowerMatrix, opts: &OptimizerOptions) -> Result<OptOutcome> {
    optimize(model, Objective::MaxMin, p_max, init, opts)
}
