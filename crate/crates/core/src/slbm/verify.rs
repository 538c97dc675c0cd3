//! Numerical checks of the minorant properties: global lower bound (P1), tightness at the
//! expansion point (P2) and matching gradients there (P3).

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linkmodel::{BlockRates, PowerMatrix, RateModel};
use crate::seed;

use super::subproblem::Subproblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Largest `(R̃_k - R_k) / max(R_k, W·1e-12)` over samples and users; positive values are
    /// violations.
    pub p1_violation: f64,
    /// Largest `|R̃_k - R_k| / R_k` at the expansion point.
    pub p2_gap: f64,
    /// Largest `‖∇R̃_k - ∇_FD R_k‖∞ / ‖∇_FD R_k‖∞` at the expansion point.
    pub p3_mismatch: f64,
    pub samples: usize,
}

fn rel(num: f64, den: f64, floor: f64) -> f64 {
    num / den.abs().max(floor)
}

/// A point uniform on `{x ≥ floor, Σ x ≤ p_max}` (a flat Dirichlet draw with one slack part,
/// shifted onto the floor).
fn sample_block<R: Rng + ?Sized>(rng: &mut R, n: usize, p_max: f64, floor: f64) -> Vec<f64> {
    let parts: Vec<f64> = (0..=n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = parts.iter().sum();
    let room = p_max - n as f64 * floor;
    parts[..n].iter().map(|p| floor + room * p / total).collect()
}

/// Checks the minorant of AP `m`'s block expanded at `eta0` on `n_samples` random feasible block
/// points.
pub fn verify_bound_properties(
    model: RateModel,
    eta0: &PowerMatrix,
    m: usize,
    p_max: f64,
    eps_floor: f64,
    n_samples: usize,
    seed: u64,
) -> Result<BoundReport> {
    let block = BlockRates::new(model, eta0, m)?;
    let x0 = block.current(eta0);
    let sub = Subproblem::new(&block, &x0, p_max, eps_floor)?;
    let tiny = model.bandwidth * 1e-12;
    let n = x0.len();
    let num_users = block.num_users();

    let true0 = block.rates(&x0)?;
    let (bound0, grad0) = sub.bounds_with_grad(&x0)?;
    let p2_gap = true0
        .iter()
        .zip(&bound0)
        .map(|(r, b)| rel((b - r).abs(), *r, tiny))
        .fold(0.0, f64::max);

    let mut p3_mismatch = 0.0f64;
    for k in 0..num_users {
        let mut fd = vec![0.0; n];
        for i in 0..n {
            let h = 1e-5 * x0[i];
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[i] += h;
            xm[i] -= h;
            fd[i] = (block.user(k, &xp, false)?.rate() - block.user(k, &xm, false)?.rate()) / (2.0 * h);
        }
        let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale == 0.0 {
            continue;
        }
        let err = fd.iter().zip(&grad0[k]).fold(0.0f64, |a, (f, g)| a.max((f - g).abs()));
        p3_mismatch = p3_mismatch.max(err / scale);
    }

    let mut rng = seed::rng(seed);
    let mut p1_violation = f64::NEG_INFINITY;
    for _ in 0..n_samples {
        let x = sample_block(&mut rng, n, p_max, eps_floor);
        let truth = block.rates(&x)?;
        let bound = sub.bounds(&x)?;
        for (r, b) in truth.iter().zip(&bound) {
            p1_violation = p1_violation.max(rel(b - r, *r, tiny));
        }
    }
    if n_samples == 0 {
        p1_violation = 0.0;
    }
    Ok(BoundReport { p1_violation, p2_gap, p3_mismatch, samples: n_samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_feasible() {
        let mut rng = seed::rng(3);
        for _ in 0..200 {
            let x = sample_block(&mut rng, 4, 2.0, 1e-6);
            assert!(x.iter().all(|v| *v >= 1e-6));
            assert!(x.iter().sum::<f64>() <= 2.0 + 1e-12);
        }
    }
}
