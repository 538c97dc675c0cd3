use crate::error::{Error, Result};

/// Shift `θ` such that `Σ max(v_i - θ, 0) = total`.
fn simplex_threshold(v: &[f64], total: f64) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - total) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    theta
}

/// Euclidean projection onto the probability simplex `{x ≥ 0, Σ x = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let theta = simplex_threshold(v, 1.0);
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Euclidean projection of `v` onto `{x : x_i ≥ floor, Σ x_i ≤ cap}`.
///
/// Clamping at the floor is the answer whenever it already satisfies the budget; otherwise the
/// budget is active and the shifted problem is a projection onto a scaled simplex, solved by
/// the sort-and-threshold rule.
pub fn project_capped_simplex(v: &[f64], cap: f64, floor: f64) -> Result<Vec<f64>> {
    let n = v.len() as f64;
    if !(floor >= 0.0) || !(cap > n * floor) {
        return Err(Error::Config(format!(
            "budget {cap:e} leaves no room for {} entries at floor {floor:e}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("projection of a non-finite vector".into()));
    }
    let clamped: Vec<f64> = v.iter().map(|&x| x.max(floor)).collect();
    if clamped.iter().sum::<f64>() <= cap {
        return Ok(clamped);
    }
    let budget = cap - n * floor;
    let shifted: Vec<f64> = v.iter().map(|&x| x - floor).collect();
    let theta = simplex_threshold(&shifted, budget);
    let mut out: Vec<f64> = shifted.iter().map(|&s| (s - theta).max(0.0) + floor).collect();
    // absorb roundoff so the budget holds exactly
    let total: f64 = out.iter().sum();
    if total > cap {
        let excess = total - cap;
        if let Some(max) = out.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *max -= excess;
        }
    }
    Ok(out)
}

/// Euclidean projection of `v` onto `{u : u_i ≥ floor, ‖u‖₂ ≤ 1}`, the amplitude form of the
/// per-AP budget with powers normalized by `P_max`.
///
/// Clamping is the answer when it lands inside the ball. Otherwise the solution is
/// `max(v / c, floor)` for the unique `c > 1` that puts it on the sphere; entries above the
/// floor are the largest ones of `v`, so `c` is found by scanning the sorted values.
pub fn project_amplitudes(v: &[f64], floor: f64) -> Result<Vec<f64>> {
    let n = v.len();
    if !(floor >= 0.0) || !(n as f64 * floor * floor < 1.0) {
        return Err(Error::Config(format!(
            "unit budget leaves no room for {n} amplitudes at floor {floor:e}"
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("projection of a non-finite vector".into()));
    }
    let clamped: Vec<f64> = v.iter().map(|&x| x.max(floor)).collect();
    if clamped.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
        return Ok(clamped);
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut top = 0.0;
    let mut scale = 1.0;
    for s in 1..=n {
        let vs = sorted[s - 1];
        top += vs * vs;
        let c = (top / (1.0 - (n - s) as f64 * floor * floor)).sqrt();
        let next_ok = s == n || sorted[s] / c <= floor;
        if vs / c > floor && next_ok {
            scale = c;
            break;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x / scale).max(floor)).collect();
    // absorb roundoff so the budget holds exactly
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 {
        for x in &mut out {
            *x = (*x / norm).max(floor);
        }
    }
    Ok(out)
}

/// Maximizer of `Σ (a_i v_i - q_i v_i²)` over `{v : v_i ≥ floor, ‖v‖₂ ≤ 1}`, all `q_i > 0`.
///
/// The maximizer is `v_i(μ) = max(a_i / (2(q_i + μ)), floor)` with the smallest multiplier
/// `μ ≥ 0` that keeps it in the ball; `‖v(μ)‖` is nonincreasing in `μ`, so `μ` is bracketed
/// and bisected. With equal weights this is the Euclidean projection of `a / (2q)`.
pub fn maximize_separable_quadratic(a: &[f64], q: &[f64], floor: f64) -> Result<Vec<f64>> {
    let n = a.len();
    if !(floor >= 0.0) || !(n as f64 * floor * floor < 1.0) {
        return Err(Error::Config(format!(
            "unit budget leaves no room for {n} amplitudes at floor {floor:e}"
        )));
    }
    if a.iter().chain(q).any(|x| !x.is_finite()) || q.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Numerical("separable quadratic needs finite data and positive weights".into()));
    }
    let point = |mu: f64| -> Vec<f64> {
        a.iter().zip(q).map(|(&a, &q)| (a / (2.0 * (q + mu))).max(floor)).collect()
    };
    let norm_sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let v0 = point(0.0);
    if norm_sq(&v0) <= 1.0 {
        return Ok(v0);
    }
    let mut lo = 0.0;
    let mut hi = a.iter().fold(0.0f64, |m, x| m.max(x.abs())) * (n as f64).sqrt();
    while norm_sq(&point(hi)) > 1.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_sq(&point(mid)) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(point(hi))
}
