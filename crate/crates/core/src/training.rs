//! Uplink pilots and pilot-matched channel estimation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::config::PilotMode;
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, CMat};
use crate::seed;

/// One `N_MS × τ_p` pilot block per user, each with orthonormal rows.
#[derive(Debug, Clone)]
pub struct PilotBook {
    pub phi: Vec<CMat>,
}

/// Received pilot blocks, one `N_AP × τ_p` matrix per AP.
#[derive(Debug, Clone)]
pub struct PilotObservation {
    pub y: Vec<CMat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotShape {
    pub users: usize,
    pub ms_antennas: usize,
    pub tau_p: usize,
}

pub fn make_pilots(shape: PilotShape, mode: PilotMode, seed: u64) -> Result<PilotBook> {
    let PilotShape { users, ms_antennas, tau_p } = shape;
    if ms_antennas == 0 || tau_p < ms_antennas {
        return Err(Error::Config(format!("need 0 < N_MS <= tau_p (got {ms_antennas}, {tau_p})")));
    }
    let phi = match mode {
        PilotMode::Random => {
            let mut rng = seed::rng(seed);
            (0..users)
                .map(|_| {
                    let x = complex_gaussian(&mut rng, tau_p, ms_antennas, 1.0);
                    // thin Q has orthonormal columns, so its adjoint has orthonormal rows
                    x.qr().q().adjoint()
                })
                .collect()
        }
        PilotMode::Orthogonal => {
            if users * ms_antennas > tau_p {
                return Err(Error::Config(format!(
                    "orthogonal pilots need K*N_MS = {} <= tau_p = {tau_p}",
                    users * ms_antennas
                )));
            }
            let scale = 1.0 / (tau_p as f64).sqrt();
            (0..users)
                .map(|k| {
                    CMat::from_fn(ms_antennas, tau_p, |r, t| {
                        let row = (k * ms_antennas + r) as f64;
                        let angle = -2.0 * std::f64::consts::PI * row * t as f64 / tau_p as f64;
                        Complex64::from_polar(scale, angle)
                    })
                })
                .collect()
        }
    };
    Ok(PilotBook { phi })
}

/// `Y_m = Σ_k √p_k G_{k,m} Φ_k + W_m` with `W_m` entries i.i.d. `CN(0, noise_var)`.
pub fn receive_pilots(
    channels: &ChannelSet,
    pilots: &PilotBook,
    pilot_power: &[f64],
    noise_var: f64,
    seed: u64,
) -> PilotObservation {
    let (num_users, num_aps) = (channels.num_users(), channels.num_aps());
    assert_eq!(pilots.phi.len(), num_users);
    assert_eq!(pilot_power.len(), num_users);
    let tau_p = pilots.phi[0].ncols();
    let mut rng = seed::rng(seed);
    let y = (0..num_aps)
        .map(|m| {
            let rows = channels.g(0, m).nrows();
            let mut y = complex_gaussian(&mut rng, rows, tau_p, noise_var);
            for k in 0..num_users {
                let amp = Complex64::new(pilot_power[k].sqrt(), 0.0);
                y.gemm(amp, channels.g(k, m), &pilots.phi[k], Complex64::new(1.0, 0.0));
            }
            y
        })
        .collect();
    PilotObservation { y }
}

/// Pilot-matched estimate `Ĝ_{k,m} = Y_m Φ_kᴴ / √p_k`.
pub fn pm_estimate(y_m: &CMat, phi_k: &CMat, p_k: f64) -> Result<CMat> {
    if !(p_k > 0.0) {
        return Err(Error::Domain(format!("pilot power must be positive (got {p_k})")));
    }
    Ok(y_m * phi_k.adjoint() * Complex64::new(1.0 / p_k.sqrt(), 0.0))
}

/// Estimates of every link, user-major, as stored in [`ChannelSet`].
pub fn estimate_all(obs: &PilotObservation, pilots: &PilotBook, pilot_power: &[f64]) -> Result<Vec<CMat>> {
    let num_users = pilots.phi.len();
    let num_aps = obs.y.len();
    let mut out = Vec::with_capacity(num_users * num_aps);
    for k in 0..num_users {
        for m in 0..num_aps {
            out.push(pm_estimate(&obs.y[m], &pilots.phi[k], pilot_power[k])?);
        }
    }
    Ok(out)
}
