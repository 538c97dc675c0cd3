//! Large-scale fading (three-slope path loss with two-component correlated shadowing) and
//! i.i.d. Rayleigh small-scale channels.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Scenario};
use crate::linalg::{complex_gaussian, CMat};
use crate::seed;

/// Propagation constant `L` (dB) of the three-slope model.
///
/// `f_mhz` is the carrier in MHz, heights in meters.
pub fn cost_hata_constant(f_mhz: f64, h_ap: f64, h_ms: f64) -> Result<f64> {
    if !(f_mhz > 0.0) || !(h_ap > 0.0) || !(h_ms >= 0.0) {
        return Err(Error::Domain(format!(
            "need f > 0, h_AP > 0, h_MS >= 0 (got {f_mhz}, {h_ap}, {h_ms})"
        )));
    }
    let lf = f_mhz.log10();
    Ok(46.3 + 33.9 * lf - 13.82 * h_ap.log10() - (1.11 * lf - 0.7) * h_ms + 1.56 * lf - 0.8)
}

/// Three-slope path loss in dB (a negative number: it is the gain `10 log10 β` before shadowing).
pub fn path_loss_db(d_m: f64, d0_m: f64, d1_m: f64, l_db: f64) -> Result<f64> {
    if !(d0_m > 0.0 && d0_m < d1_m) {
        return Err(Error::Config(format!("need 0 < d0 < d1 (got d0={d0_m}, d1={d1_m})")));
    }
    if !(d_m >= 0.0) {
        return Err(Error::Domain(format!("negative distance {d_m}")));
    }
    Ok(if d_m > d1_m {
        -l_db - 35.0 * d_m.log10()
    } else if d_m > d0_m {
        -l_db - 10.0 * (d1_m.powf(1.5) * d_m * d_m).log10()
    } else {
        -l_db - 10.0 * (d1_m.powf(1.5) * d0_m * d0_m).log10()
    })
}

/// Covariance `2^(-d/d_decorr)` between every pair of points.
pub fn shadow_covariance(points: &[Point], d_decorr_m: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| 2f64.powf(-points[i].distance(&points[j]) / d_decorr_m))
}

/// Symmetric square root `V diag(√λ⁺) Vᵀ` of a covariance, clamping roundoff-negative
/// eigenvalues at zero.
fn covariance_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(cov.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-8 * max.max(1.0) {
        return Err(Error::Numerical(format!(
            "shadowing covariance is not PSD (eigenvalue {min:e}); distance matrix: {:?}",
            cov.map(|c| -c.log2()).as_slice()
        )));
    }
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
}

/// Two-component shadowing field `z_{k,m} = √δ a_m + √(1-δ) b_k` (`K × M`).
///
/// `a` and `b` are zero-mean unit-variance Gaussian vectors correlated over AP and user
/// positions respectively.
pub fn shadow_fields(scenario: &Scenario, delta: f64, d_decorr_m: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Config(format!("delta = {delta} must lie in [0, 1]")));
    }
    if !(d_decorr_m > 0.0) {
        return Err(Error::Config(format!("d_decorr = {d_decorr_m} must be positive")));
    }
    let sa = covariance_sqrt(&shadow_covariance(&scenario.ap_pos, d_decorr_m))?;
    let sb = covariance_sqrt(&shadow_covariance(&scenario.ms_pos, d_decorr_m))?;
    let mut rng = seed::rng(seed);
    let mut normals = |n: usize| DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let xi_a = normals(scenario.ap_pos.len());
    let xi_b = normals(scenario.ms_pos.len());
    let a = sa * xi_a;
    let b = sb * xi_b;
    let (wa, wb) = (delta.sqrt(), (1.0 - delta).sqrt());
    Ok(DMatrix::from_fn(scenario.ms_pos.len(), scenario.ap_pos.len(), |k, m| wa * a[m] + wb * b[k]))
}

/// `β = 10^(PL/10) · 10^(σ_sh z / 10)` entrywise.
pub fn large_scale_gain(pl_db: &DMatrix<f64>, z: &DMatrix<f64>, sigma_sh_db: f64) -> Result<DMatrix<f64>> {
    if pl_db.shape() != z.shape() {
        return Err(Error::Domain("path-loss and shadowing shapes differ".into()));
    }
    Ok(pl_db.zip_map(z, |pl, z| 10f64.powf(pl / 10.0) * 10f64.powf(sigma_sh_db * z / 10.0)))
}

/// Large-scale fading of every user/AP pair, all `K × M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeScale {
    pub beta: DMatrix<f64>,
    pub pl_db: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl LargeScale {
    pub fn compute(
        scenario: &Scenario,
        config: &crate::SystemConfig,
        shadow_seed: u64,
    ) -> Result<Self> {
        let l_db = cost_hata_constant(config.f_mhz, config.h_ap, config.h_ms)?;
        let dist = scenario.distances();
        let mut pl_db = DMatrix::zeros(dist.nrows(), dist.ncols());
        for (pl, &d) in pl_db.iter_mut().zip(dist.iter()) {
            *pl = path_loss_db(d, config.d0_m, config.d1_m, l_db)?;
        }
        let z = shadow_fields(scenario, config.delta, config.d_decorr_m, shadow_seed)?;
        let beta = large_scale_gain(&pl_db, &z, config.sigma_sh_db)?;
        Ok(Self { beta, pl_db, z })
    }

    /// CSV with columns `k,m,pl_db,z,beta`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,m,pl_db,z,beta\n");
        for k in 0..self.beta.nrows() {
            for m in 0..self.beta.ncols() {
                let _ = writeln!(
                    out,
                    "{k},{m},{},{},{}",
                    self.pl_db[(k, m)],
                    self.z[(k, m)],
                    self.beta[(k, m)]
                );
            }
        }
        out
    }
}

/// True channels, their estimates and the large-scale gains they were drawn from.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    num_users: usize,
    num_aps: usize,
    /// `G_{k,m}`, user-major.
    g: Vec<CMat>,
    /// `Ĝ_{k,m}`, user-major.
    g_hat: Vec<CMat>,
    pub large_scale: LargeScale,
}

impl ChannelSet {
    /// Wraps true channels; estimates start equal to the truth (perfect CSI).
    pub fn new(num_users: usize, num_aps: usize, g: Vec<CMat>, large_scale: LargeScale) -> Self {
        assert_eq!(g.len(), num_users * num_aps);
        let g_hat = g.clone();
        Self { num_users, num_aps, g, g_hat, large_scale }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn g(&self, k: usize, m: usize) -> &CMat {
        &self.g[k * self.num_aps + m]
    }

    pub fn g_hat(&self, k: usize, m: usize) -> &CMat {
        &self.g_hat[k * self.num_aps + m]
    }

    pub fn set_estimates(&mut self, g_hat: Vec<CMat>) {
        assert_eq!(g_hat.len(), self.g.len());
        self.g_hat = g_hat;
    }

    /// `K × M` matrix of `‖Ĝ_{k,m}‖_F`.
    pub fn estimate_norms(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_users, self.num_aps, |k, m| self.g_hat(k, m).norm())
    }
}

/// Draws `G_{k,m} = √β_{k,m} H_{k,m}` with `H` entries i.i.d. `CN(0, 1)`, user-major order.
pub fn draw_channels(beta: &DMatrix<f64>, ap_antennas: usize, ms_antennas: usize, seed: u64) -> Vec<CMat> {
    let mut rng = seed::rng(seed);
    let (num_users, num_aps) = beta.shape();
    let mut out = Vec::with_capacity(num_users * num_aps);
    for k in 0..num_users {
        for m in 0..num_aps {
            let h = complex_gaussian(&mut rng, ap_antennas, ms_antennas, 1.0);
            out.push(h * Complex64::new(beta[(k, m)].sqrt(), 0.0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hata_constant_reference_values() {
        let l = cost_hata_constant(1900.0, 15.0, 1.65).unwrap();
        assert!((l - 140.660_984_269_492_7).abs() < 1e-9, "{l}");
        let l = cost_hata_constant(1000.0, 1.0, 0.0).unwrap();
        assert!((l - 151.88).abs() < 1e-12);
        assert!(cost_hata_constant(1900.0, 30.0, 1.65).unwrap() < cost_hata_constant(1900.0, 15.0, 1.65).unwrap());
        assert!(matches!(cost_hata_constant(0.0, 15.0, 1.65), Err(Error::Domain(_))));
        assert!(cost_hata_constant(1900.0, -1.0, 1.65).is_err());
    }

    #[test]
    fn path_loss_branches() {
        let pl = path_loss_db(100.0, 10.0, 50.0, 140.66).unwrap();
        assert!((pl + 210.66).abs() < 1e-9);
        assert_eq!(path_loss_db(5.0, 10.0, 50.0, 140.0).unwrap(), path_loss_db(9.0, 10.0, 50.0, 140.0).unwrap());
        let below = path_loss_db(10.0, 10.0, 50.0, 140.0).unwrap();
        let mid = -140.0 - 10.0 * (50f64.powf(1.5) * 100.0).log10();
        assert!((below - mid).abs() < 1e-12);
        let at_d1 = path_loss_db(50.0, 10.0, 50.0, 140.0).unwrap();
        assert!((at_d1 - (-140.0 - 35.0 * 50f64.log10())).abs() < 1e-9);
        assert!(matches!(path_loss_db(1.0, 50.0, 10.0, 140.0), Err(Error::Config(_))));
    }

    #[test]
    fn covariance_reference_entries() {
        let pts = [Point { x: 0.0, y: 0.0 }, Point { x: 0.0, y: 0.0 }, Point { x: 100.0, y: 0.0 }];
        let c = shadow_covariance(&pts, 100.0);
        assert_eq!(c[(0, 1)], 1.0);
        assert!((c[(0, 2)] - 0.5).abs() < 1e-15);
        // coincident points make the covariance singular; the square root must still exist
        assert!(covariance_sqrt(&c).is_ok());
    }

    #[test]
    fn full_ap_weight_makes_field_user_independent() {
        let cfg = crate::SystemConfig { num_aps: 6, num_users: 4, ..Default::default() };
        let s = crate::geometry::drop_scenario(&cfg, 2);
        let z = shadow_fields(&s, 1.0, 100.0, 9).unwrap();
        for m in 0..6 {
            for k in 1..4 {
                assert_eq!(z[(k, m)], z[(0, m)]);
            }
        }
    }

    #[test]
    fn gain_arithmetic() {
        let pl = DMatrix::from_element(1, 1, -30.0);
        let z0 = DMatrix::zeros(1, 1);
        assert!((large_scale_gain(&pl, &z0, 8.0).unwrap()[(0, 0)] - 1e-3).abs() < 1e-18);
        let b = large_scale_gain(&DMatrix::zeros(1, 1), &DMatrix::from_element(1, 1, 1.25), 8.0).unwrap();
        assert!((b[(0, 0)] - 10.0).abs() < 1e-12);
        let b = large_scale_gain(&DMatrix::from_element(1, 1, -210.66), &z0, 8.0).unwrap();
        assert!((b[(0, 0)] / 8.590_135_215e-22 - 1.0).abs() < 1e-6, "{}", b[(0, 0)]);
    }

    #[test]
    fn zero_gain_gives_zero_channel() {
        let g = draw_channels(&DMatrix::zeros(1, 1), 4, 2, 0);
        assert_eq!(g[0].norm(), 0.0);
    }
}
