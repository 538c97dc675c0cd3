//! Convex-minorant block subproblems.
//!
//! The minorant is defined on the powers `η` of one AP, but both solvers iterate on normalized
//! amplitudes `u = √(η / P_max)`: rates are smooth in `u` (their slope in `η` grows like
//! `1/√η` near zero power), and the budget becomes the unit ball intersected with the orthant,
//! which has a cheap exact projection. Objectives are scaled to bit/s/Hz so that the step rule
//! and `pg_tol` do not depend on the power and rate scales.

use crate::error::Result;
use crate::linkmodel::{BlockRates, Gradients, Linearization};

use super::projection::{maximize_separable_quadratic, project_amplitudes, project_simplex};
use super::{Objective, OptimizerOptions};

/// The minorized block problem of one AP expanded at `x0`.
#[derive(Debug, Clone)]
pub struct Subproblem<'b, 'a> {
    pub block: &'b BlockRates<'a>,
    pub lin: Linearization,
    pub p_max: f64,
    pub eps_floor: f64,
}

/// Result of one subproblem solve.
#[derive(Debug, Clone)]
pub struct SubSolution {
    /// Block powers in watts, in the order of `K(m)`.
    pub x: Vec<f64>,
    /// Minorant objective at `x`: `Σ_k R̃_k` or `t* = min_k R̃_k`, bit/s.
    pub value: f64,
    /// Length (max-norm) of the unit projected step at termination, in normalized amplitudes.
    pub stationarity: f64,
    pub iterations: usize,
    pub line_search_failed: bool,
}

impl<'b, 'a> Subproblem<'b, 'a> {
    pub fn new(block: &'b BlockRates<'a>, x0: &[f64], p_max: f64, eps_floor: f64) -> Result<Self> {
        block.check_floor(x0, eps_floor)?;
        let lin = block.linearize(x0)?;
        Ok(Self { block, lin, p_max, eps_floor })
    }

    pub fn x0(&self) -> &[f64] {
        &self.lin.x0
    }

    /// `R̃_k(x; x0)` for every user, bit/s.
    pub fn bounds(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.block.num_users())
            .map(|k| Ok(self.block.user(k, x, false)?.g1 - self.lin.affine(k, x)))
            .collect()
    }

    /// Bounds and their power gradients (bit/s per watt); `x` must be positive.
    pub fn bounds_with_grad(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mut values = Vec::with_capacity(self.block.num_users());
        let mut grads = Vec::with_capacity(self.block.num_users());
        for k in 0..self.block.num_users() {
            let e = self.block.user(k, x, true)?;
            values.push(e.g1 - self.lin.affine(k, x));
            grads.push(e.grad_g1(x)?.iter().zip(&self.lin.grad[k]).map(|(a, b)| a - b).collect());
        }
        Ok((values, grads))
    }

    pub fn objective(&self, kind: Objective, x: &[f64]) -> Result<f64> {
        Ok(kind.of(&self.bounds(x)?))
    }

    /// Nonnegative part of the coefficients `c_i` of `-Σ_i c_i u_i²`, the linearized `g2` terms
    /// in normalized amplitudes: summed over users for the sum-rate, the largest user's for
    /// max-min.
    fn g2_curvature(&self, kind: Objective) -> Vec<f64> {
        let scale = self.p_max / self.block.bandwidth();
        (0..self.lin.x0.len())
            .map(|i| {
                let col = self.lin.grad.iter().map(|row| scale * row[i]);
                let c = match kind {
                    Objective::SumRate => col.sum::<f64>(),
                    Objective::MaxMin => col.fold(0.0, f64::max),
                };
                c.max(0.0)
            })
            .collect()
    }

    fn amp_floor(&self) -> f64 {
        (self.eps_floor / self.p_max).sqrt()
    }

    /// Squaring can land one ulp under the floor, hence the clamp.
    fn to_watts(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|v| (self.p_max * v * v).max(self.eps_floor)).collect()
    }

    fn to_amplitudes(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| (v / self.p_max).sqrt()).collect()
    }

    fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        project_amplitudes(v, self.amp_floor())
    }

    /// Bounds in bit/s/Hz and, when `grad` is set, their gradients in `u`.
    fn normalized(&self, u: &[f64], grad: bool) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let x = self.to_watts(u);
        let w = self.block.bandwidth();
        let root_p = self.p_max.sqrt();
        let mut s = self.block.scratch();
        let mut values = Vec::with_capacity(self.block.num_users());
        let mut grads = Vec::new();
        for k in 0..self.block.num_users() {
            let mode = if grad { Gradients::G1 } else { Gradients::None };
            let (g1, _) = self.block.eval_into(k, &x, mode, &mut s)?;
            values.push((g1 - self.lin.affine(k, &x)) / w);
            if grad {
                // ∂/∂u = √P (∂/∂√η), and the affine part contributes 2√η ∂/∂η
                let row = s
                    .amp_grad_g1
                    .iter()
                    .zip(&self.lin.grad[k])
                    .zip(u)
                    .map(|((g1, l), ui)| root_p * (g1 - 2.0 * root_p * ui * l) / w)
                    .collect();
                grads.push(row);
            }
        }
        Ok((values, grads))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

struct Ascent {
    u: Vec<f64>,
    stationarity: f64,
    iterations: usize,
    line_search_failed: bool,
}

fn finish(sub: &Subproblem, kind: Objective, res: Ascent) -> Result<SubSolution> {
    let x = sub.to_watts(&res.u);
    let value = sub.objective(kind, &x)?;
    Ok(SubSolution {
        x,
        value,
        stationarity: res.stationarity,
        iterations: res.iterations,
        line_search_failed: res.line_search_failed,
    })
}

/// Maximizes `Σ_k R̃_k` over the block's budget by proximal gradient ascent with Armijo
/// backtracking and Barzilai-Borwein trial steps.
///
/// In amplitudes the linearized `g2` terms are the separable quadratic `-Σ_i c_i u_i²`. Its
/// curvature is huge for entries expanded near zero power (the power gradient of `g2` grows like
/// `1/√η`), so the concave part (`c_i > 0`) is kept out of the gradient step and maximized
/// exactly together with the proximal term; only the remaining smooth part is linearized.
pub fn solve_subproblem_sumrate(sub: &Subproblem, opts: &OptimizerOptions) -> Result<SubSolution> {
    let curv = sub.g2_curvature(Objective::SumRate);
    let penalty = |u: &[f64]| -> f64 { u.iter().zip(&curv).map(|(u, c)| c * u * u).sum() };
    // gradient of the smooth part F + Σ c_i u_i²
    let eval = |u: &[f64], grad: bool| -> Result<(f64, Vec<f64>)> {
        let (v, g) = sub.normalized(u, grad)?;
        let mut total: Vec<f64> = if grad {
            u.iter().zip(&curv).map(|(u, c)| 2.0 * c * u).collect()
        } else {
            Vec::new()
        };
        for row in &g {
            for (t, d) in total.iter_mut().zip(row) {
                *t += d;
            }
        }
        Ok((v.iter().sum(), total))
    };
    let floor = sub.amp_floor();
    let trial = |u: &[f64], g: &[f64], s: f64| -> Result<Vec<f64>> {
        let lin: Vec<f64> = u.iter().zip(g).map(|(u, g)| g + u / s).collect();
        let quad: Vec<f64> = curv.iter().map(|c| 0.5 / s + c).collect();
        maximize_separable_quadratic(&lin, &quad, floor)
    };

    let mut u = sub.project(&sub.to_amplitudes(sub.x0()))?;
    let (mut f, mut g) = eval(&u, true)?;
    let mut step = opts.initial_step / max_abs(&g).max(f64::MIN_POSITIVE);
    let mut out = Ascent { u: Vec::new(), stationarity: f64::INFINITY, iterations: 0, line_search_failed: false };

    for it in 0..opts.max_pg {
        out.iterations = it;
        out.stationarity = max_diff(&trial(&u, &g, 1.0)?, &u);
        if out.stationarity <= opts.pg_tol {
            break;
        }
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let cand = trial(&u, &g, step)?;
            let d: Vec<f64> = cand.iter().zip(&u).map(|(c, u)| c - u).collect();
            let gain = dot(&g, &d) - penalty(&cand) + penalty(&u);
            let (fc, _) = eval(&cand, false)?;
            if fc >= f + opts.armijo * gain {
                accepted = Some((cand, fc, max_abs(&d)));
                break;
            }
            step *= opts.backtrack;
        }
        let Some((cand, fc, moved)) = accepted else {
            out.line_search_failed = true;
            break;
        };
        let stalled = fc - f <= 1e-15 * f.abs().max(1.0) && moved <= 1e-15;
        let (fn_, gn) = eval(&cand, true)?;
        // next trial step: Barzilai-Borwein on the smooth part, sᵀy < 0 where it is locally
        // concave
        let s_vec: Vec<f64> = cand.iter().zip(&u).map(|(c, u)| c - u).collect();
        let y_vec: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s_vec, &y_vec);
        step = if sy < 0.0 { -dot(&s_vec, &s_vec) / sy } else { step / opts.backtrack };
        u = cand;
        (f, g) = (fn_, gn);
        out.iterations = it + 1;
        if stalled {
            break;
        }
    }
    out.u = u;
    finish(sub, Objective::SumRate, out)
}

const DUAL_ITERATIONS: usize = 50;
const DUAL_GAP: f64 = 1e-4;

/// Best move `d` for `max min_k (f_k + g_k·d) - Σ_i q_i d_i²` with `u + d` feasible, where
/// `q_i = 1/(2s) + curv_i`.
///
/// Solved through the dual `min_{λ∈Δ} Σ λ_k f_k + max_d (Gᵀλ·d - Σ q_i d_i²)`, whose inner
/// maximizer is a separable quadratic over the budget, by accelerated projected gradient on `λ`
/// (warm-started from `lambda`). Returns the new point and the model gain
/// `min_k (f_k + g_k·d) - min_k f_k` (zero when no move beats staying put).
fn prox_linear_step(
    sub: &Subproblem,
    f: &[f64],
    g: &[Vec<f64>],
    u: &[f64],
    s: f64,
    curv: &[f64],
    lambda: &mut Vec<f64>,
) -> Result<(Vec<f64>, f64)> {
    let fmin = min_of(f);
    let q: Vec<f64> = curv.iter().map(|c| 0.5 / s + c).collect();
    let floor = sub.amp_floor();
    let target = |lam: &[f64]| -> Result<Vec<f64>> {
        let mut a: Vec<f64> = u.iter().zip(&q).map(|(u, q)| 2.0 * q * u).collect();
        for (l, row) in lam.iter().zip(g) {
            for (ai, gi) in a.iter_mut().zip(row) {
                *ai += l * gi;
            }
        }
        maximize_separable_quadratic(&a, &q, floor)
    };
    let move_of = |p: &[f64]| -> Vec<f64> { p.iter().zip(u).map(|(p, u)| p - u).collect() };
    let model = |d: &[f64]| -> f64 { f.iter().zip(g).map(|(fk, gk)| fk + dot(gk, d)).fold(f64::INFINITY, f64::min) };
    let prox = |d: &[f64]| -> f64 { d.iter().zip(&q).map(|(d, q)| q * d * d).sum() };
    let primal = |d: &[f64]| model(d) - prox(d);

    let mut best_u = u.to_vec();
    let mut best_p = fmin;
    let q_min = q.iter().cloned().fold(f64::INFINITY, f64::min);
    let lip = g.iter().map(|r| dot(r, r)).sum::<f64>() / (2.0 * q_min);
    let mut z = lambda.clone();
    let mut prev = lambda.clone();
    let mut t = 1.0f64;
    for _ in 0..DUAL_ITERATIONS {
        let pz = target(&z)?;
        let d = move_of(&pz);
        let p = primal(&d);
        if p > best_p {
            best_p = p;
            best_u = pz;
        }
        if f.len() == 1 || lip == 0.0 {
            break;
        }
        let grad: Vec<f64> = f.iter().zip(g).map(|(fk, gk)| fk + dot(gk, &d)).collect();
        let upper = dot(&z, &grad) - prox(&d);
        if upper - best_p <= DUAL_GAP * (upper - fmin).max(0.0) + 1e-15 * (1.0 + fmin.abs()) {
            break;
        }
        let stepped: Vec<f64> = z.iter().zip(&grad).map(|(z, gr)| z - gr / lip).collect();
        let next = project_simplex(&stepped);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let extrapolated: Vec<f64> = next.iter().zip(&prev).map(|(a, b)| a + (t - 1.0) / t_next * (a - b)).collect();
        z = project_simplex(&extrapolated);
        prev = next;
        t = t_next;
    }
    *lambda = prev;
    let gain = model(&move_of(&best_u)) - fmin;
    Ok((best_u, gain.max(0.0)))
}

/// Maximizes `t = min_k R̃_k` over the block's budget.
///
/// Each iteration takes the prox-linear step of the pointwise minimum (all users linearized
/// jointly, plus a diagonal proximal term) and accepts it under an Armijo test on the exact
/// minimum, shrinking `s` on failure and growing it after success. The proximal weight of entry
/// `i` is `1/(2s)` plus the largest curvature `c_{k,i}` of the linearized `g2` terms
/// `-Σ_i c_{k,i} u_i²`, which damps entries expanded near zero power. Stationarity is the first
/// trial step length of an iteration divided by `min(s, 1)`.
pub fn solve_subproblem_maxmin(sub: &Subproblem, opts: &OptimizerOptions) -> Result<SubSolution> {
    let curv = sub.g2_curvature(Objective::MaxMin);
    let mut u = sub.project(&sub.to_amplitudes(sub.x0()))?;
    let (mut f, mut g) = sub.normalized(&u, true)?;
    let mut fmin = min_of(&f);
    let scale = g.iter().map(|r| max_abs(r)).fold(0.0, f64::max);
    let mut step = opts.initial_step / scale.max(f64::MIN_POSITIVE);
    let mut lambda = vec![0.0; f.len()];
    if let Some((i, _)) = f.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) {
        lambda[i] = 1.0;
    }
    let mut out = Ascent { u: Vec::new(), stationarity: f64::INFINITY, iterations: 0, line_search_failed: false };

    for it in 0..opts.max_pg {
        out.iterations = it;
        let mut accepted = None;
        let mut first = true;
        for _ in 0..opts.max_backtracks {
            let (cand, gain) = prox_linear_step(sub, &f, &g, &u, step, &curv, &mut lambda)?;
            if first {
                out.stationarity = max_diff(&cand, &u) / step.min(1.0);
                first = false;
                if out.stationarity <= opts.pg_tol {
                    break;
                }
            }
            if gain > 0.0 {
                let fc = min_of(&sub.normalized(&cand, false)?.0);
                if fc >= fmin + opts.armijo * gain {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            step *= opts.backtrack;
        }
        if out.stationarity <= opts.pg_tol {
            break;
        }
        let Some((cand, fc)) = accepted else {
            out.line_search_failed = true;
            break;
        };
        let stalled = fc - fmin <= 1e-15 * fmin.abs().max(1.0) && max_diff(&cand, &u) <= 1e-15;
        u = cand;
        (f, g) = sub.normalized(&u, true)?;
        fmin = min_of(&f);
        out.iterations = it + 1;
        if stalled {
            break;
        }
        step /= opts.backtrack;
    }
    out.u = u;
    finish(sub, Objective::MaxMin, out)
}

/// Maximizes the minorant over the single coordinate `idx` of the block, all other block
/// entries fixed, by golden-section search on `[floor, P_max - Σ_{others}]`.
pub(super) fn solve_scalar(sub: &Subproblem, kind: Objective, idx: usize, tol: f64) -> Result<SubSolution> {
    let x0 = sub.x0().to_vec();
    let others: f64 = x0.iter().enumerate().filter(|(i, _)| *i != idx).map(|(_, v)| v).sum();
    let lo = sub.eps_floor;
    let hi = (sub.p_max - others).max(lo);
    let eval = |t: f64| -> Result<f64> {
        let mut x = x0.clone();
        x[idx] = t;
        sub.objective(kind, &x)
    };
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    let mut iterations = 0;
    while (b - a) > tol * sub.p_max && iterations < 200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
        iterations += 1;
    }
    let mut best = (x0[idx], eval(x0[idx])?);
    for t in [lo, hi, c, d] {
        let f = eval(t)?;
        if f > best.1 {
            best = (t, f);
        }
    }
    let mut x = x0;
    x[idx] = best.0;
    Ok(SubSolution { x, value: best.1, stationarity: (b - a) / sub.p_max, iterations, line_search_failed: false })
}
