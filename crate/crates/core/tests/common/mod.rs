#![allow(dead_code)]

use cellfree::geometry::{select_clusters, ClusterMap};
use cellfree::harness::Realization;
use cellfree::linalg::{complex_gaussian, identity, CMat};
use cellfree::linkmodel::{stream_selector, LinkGains, PowerMatrix};
use cellfree::seed::rng;
use cellfree::{CsiMode, SystemConfig};
use num_complex::Complex64;

/// M=4, K=3, N_AP=2, N_MS=2, P_k=2.
pub fn desk() -> SystemConfig {
    SystemConfig { num_aps: 4, num_users: 3, ap_antennas: 2, ms_antennas: 2, streams: 2, ..Default::default() }
}

/// Random `P × P` link gains with `L_kᴴ L_k = I`; blocks with `k ≠ j` are scaled by `cross`.
pub fn random_gains(seed: u64, clusters: ClusterMap, streams: usize, cross: f64) -> LinkGains {
    let (k_n, m_n) = (clusters.num_users(), clusters.num_aps());
    let mut r = rng(seed);
    let mut a = Vec::with_capacity(k_n * k_n * m_n);
    for k in 0..k_n {
        for j in 0..k_n {
            for _ in 0..m_n {
                let var = if k == j { 1.0 } else { cross * cross };
                a.push(complex_gaussian(&mut r, streams, streams, var));
            }
        }
    }
    LinkGains::from_parts(vec![identity(streams); k_n], a, clusters).unwrap()
}

/// Link gains of the drawn realization at `config`'s mode and CSI.
pub fn drawn_gains(config: &SystemConfig, trial_seed: u64) -> LinkGains {
    let real = Realization::draw(config, trial_seed).unwrap();
    let ch = real.channels(config.csi);
    let clusters = select_clusters(&ch.estimate_norms(), config.mode, config.cluster_size().unwrap()).unwrap();
    let sel = vec![stream_selector(config.ms_antennas, config.streams).unwrap(); config.num_users];
    LinkGains::compute(&ch, &clusters, &sel).unwrap()
}

pub fn csi_gains(config: &SystemConfig, trial_seed: u64, csi: CsiMode) -> LinkGains {
    drawn_gains(&SystemConfig { csi, ..config.clone() }, trial_seed)
}

fn det(m: &CMat) -> f64 {
    m.clone().determinant().re
}

/// Rates straight from the definition: `W log2 det(S + I_k) / det(I_k)` with the covariance
/// built from an explicit double sum over serving APs.
pub fn oracle_rates(gains: &LinkGains, eta: &PowerMatrix, noise: f64, bandwidth: f64) -> Vec<f64> {
    let k_n = gains.num_users();
    (0..k_n)
        .map(|k| {
            let p = gains.selector_gram(k).nrows();
            let mut interf = gains.selector_gram(k) * Complex64::new(noise, 0.0);
            let mut own = CMat::zeros(p, p);
            for j in 0..k_n {
                let term = double_sum(gains, eta, k, j);
                if j == k {
                    own += term;
                } else {
                    interf += term;
                }
            }
            bandwidth * (det(&(&interf + own)) / det(&interf)).log2()
        })
        .collect()
}

/// `Σ_m Σ_l √(η_{j,m} η_{j,l}) A_{k,j,m} A_{k,j,l}ᴴ`.
pub fn double_sum(gains: &LinkGains, eta: &PowerMatrix, k: usize, j: usize) -> CMat {
    let serving = &gains.clusters().serving_aps[j];
    let p = gains.selector_gram(k).nrows();
    let mut out = CMat::zeros(p, p);
    for &m in serving {
        for &l in serving {
            let w = (eta.get(j, m) * eta.get(j, l)).sqrt();
            out += gains.a(k, j, m) * gains.a(k, j, l).adjoint() * Complex64::new(w, 0.0);
        }
    }
    out
}

/// Best value of `objective(rates)` over `{η₁, η₂ ≥ 0, η₁ + η₂ ≤ p_max}` on a grid of step
/// `p_max / steps`, for a single AP serving two users. Returns `(best_sum, best_min)`.
pub fn grid_search_two_users(gains: &LinkGains, noise: f64, bandwidth: f64, p_max: f64, steps: usize) -> (f64, f64) {
    let mut eta = PowerMatrix::zeros(2, 1);
    let (mut best_sum, mut best_min) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            eta.eta[(0, 0)] = p_max * i as f64 / steps as f64;
            eta.eta[(1, 0)] = p_max * j as f64 / steps as f64;
            let r = oracle_rates(gains, &eta, noise, bandwidth);
            best_sum = best_sum.max(r[0] + r[1]);
            best_min = best_min.max(r[0].min(r[1]));
        }
    }
    (best_sum, best_min)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
