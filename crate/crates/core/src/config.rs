//! Run configuration.
//!
//! Field names in the serialized form follow the conventional symbol names (`M`, `K`, `N_AP`,
//! ...), so a config file reads like a parameter table. Optimizer options are flattened into the
//! same table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slbm::{Objective, OptimizerOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkMode {
    /// Every AP serves every user.
    Cf,
    /// Every AP serves its `N_cluster` strongest users.
    Uc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiMode {
    Perfect,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PilotMode {
    /// Independent row-orthonormal Gaussian pilots, non-orthogonal across users.
    Random,
    /// Disjoint rows of a unitary DFT matrix. Test use only.
    Orthogonal,
}

impl NetworkMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkMode::Cf => "cf",
            NetworkMode::Uc => "uc",
        }
    }
}

impl CsiMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CsiMode::Perfect => "perfect",
            CsiMode::Estimated => "estimated",
        }
    }
}

impl std::str::FromStr for NetworkMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cf" => Ok(NetworkMode::Cf),
            "uc" => Ok(NetworkMode::Uc),
            other => Err(Error::Parse(format!("unknown mode `{other}` (expected cf|uc)"))),
        }
    }
}

impl std::str::FromStr for CsiMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "perfect" => Ok(CsiMode::Perfect),
            "estimated" => Ok(CsiMode::Estimated),
            other => Err(Error::Parse(format!(
                "unknown csi `{other}` (expected perfect|estimated)"
            ))),
        }
    }
}

/// All physical and algorithmic parameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// Number of APs.
    #[serde(rename = "M")]
    pub num_aps: usize,
    /// Number of users (mobile stations).
    #[serde(rename = "K")]
    pub num_users: usize,
    #[serde(rename = "N_AP")]
    pub ap_antennas: usize,
    #[serde(rename = "N_MS")]
    pub ms_antennas: usize,
    /// Multiplexing order, identical for every user.
    #[serde(rename = "P_k")]
    pub streams: usize,
    /// Pilot length in samples.
    pub tau_p: usize,
    /// Side of the square deployment area, meters.
    pub area_side: f64,
    pub f_mhz: f64,
    pub h_ap: f64,
    pub h_ms: f64,
    pub sigma_sh_db: f64,
    pub d0_m: f64,
    pub d1_m: f64,
    /// Shadowing mixing weight between the AP and the user component.
    pub delta: f64,
    pub d_decorr_m: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    /// Uplink pilot power per user, watts.
    pub p_uplink_w: f64,
    /// Downlink power budget per AP, watts.
    pub p_max_w: f64,
    pub mode: NetworkMode,
    /// Users served per AP in UC mode. Has no default.
    #[serde(rename = "N_cluster", skip_serializing_if = "Option::is_none")]
    pub n_cluster: Option<usize>,
    pub csi: CsiMode,
    pub pilot_mode: PilotMode,
    /// Overrides the training noise variance (watts). Defaults to the downlink noise power.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_noise_var_w: Option<f64>,
    /// What the optimizer maximizes.
    pub objective: Objective,
    #[serde(flatten)]
    pub optimizer: OptimizerOptions,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_aps: 60,
            num_users: 15,
            ap_antennas: 4,
            ms_antennas: 2,
            streams: 2,
            tau_p: 32,
            area_side: 800.0,
            f_mhz: 1900.0,
            h_ap: 15.0,
            h_ms: 1.65,
            sigma_sh_db: 8.0,
            d0_m: 10.0,
            d1_m: 50.0,
            delta: 0.5,
            d_decorr_m: 100.0,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 6.0,
            bandwidth_hz: 20e6,
            p_uplink_w: 0.1,
            p_max_w: 1.0,
            mode: NetworkMode::Cf,
            n_cluster: None,
            csi: CsiMode::Estimated,
            pilot_mode: PilotMode::Random,
            training_noise_var_w: None,
            objective: Objective::SumRate,
            optimizer: OptimizerOptions::default(),
        }
    }
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SystemConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    /// Receiver noise power in watts: `psd + 10 log10(W) + NF`, converted from dBm.
    pub fn noise_var_w(&self) -> f64 {
        let dbm = self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db;
        10f64.powf((dbm - 30.0) / 10.0)
    }

    pub fn training_noise_var(&self) -> f64 {
        self.training_noise_var_w.unwrap_or_else(|| self.noise_var_w())
    }

    /// Users per AP cluster: `K` in CF mode, `N_cluster` in UC mode.
    pub fn cluster_size(&self) -> Result<usize> {
        match self.mode {
            NetworkMode::Cf => Ok(self.num_users),
            NetworkMode::Uc => {
                let n = self.n_cluster.ok_or_else(|| {
                    Error::Config("N_cluster is required in UC mode".to_string())
                })?;
                if n == 0 || n > self.num_users {
                    return Err(Error::Config(format!(
                        "N_cluster = {n} must lie in 1..={}",
                        self.num_users
                    )));
                }
                Ok(n)
            }
        }
    }

    /// Lower bound on every optimized power, watts.
    pub fn eps_floor_w(&self) -> f64 {
        self.optimizer.eps_floor_rel * self.p_max_w
    }

    pub fn validate(&self) -> Result<()> {
        let positive_counts = [
            ("M", self.num_aps),
            ("K", self.num_users),
            ("N_AP", self.ap_antennas),
            ("N_MS", self.ms_antennas),
            ("P_k", self.streams),
            ("tau_p", self.tau_p),
        ];
        for (name, v) in positive_counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.ms_antennas % self.streams != 0 {
            return Err(Error::Config(format!(
                "P_k = {} must divide N_MS = {}",
                self.streams, self.ms_antennas
            )));
        }
        if self.tau_p < self.ms_antennas {
            return Err(Error::Config(format!(
                "tau_p = {} must be at least N_MS = {}",
                self.tau_p, self.ms_antennas
            )));
        }
        if self.ms_antennas > self.ap_antennas {
            return Err(Error::Config(format!(
                "channel inversion needs N_MS = {} <= N_AP = {}",
                self.ms_antennas, self.ap_antennas
            )));
        }
        let positive_reals = [
            ("area_side", self.area_side),
            ("f_mhz", self.f_mhz),
            ("h_ap", self.h_ap),
            ("d0_m", self.d0_m),
            ("d1_m", self.d1_m),
            ("d_decorr_m", self.d_decorr_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("p_uplink_w", self.p_uplink_w),
            ("p_max_w", self.p_max_w),
        ];
        for (name, v) in positive_reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive and finite")));
            }
        }
        if !(self.h_ms >= 0.0) || !(self.sigma_sh_db >= 0.0) {
            return Err(Error::Config("h_ms and sigma_sh_db must be nonnegative".into()));
        }
        if self.d0_m >= self.d1_m {
            return Err(Error::Config(format!(
                "path-loss breakpoints need d0 < d1 (got {} >= {})",
                self.d0_m, self.d1_m
            )));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::Config(format!("delta = {} must lie in [0, 1]", self.delta)));
        }
        if let Some(v) = self.training_noise_var_w {
            if !(v >= 0.0) {
                return Err(Error::Config("training_noise_var_w must be nonnegative".into()));
            }
        }
        if self.pilot_mode == PilotMode::Orthogonal
            && self.num_users * self.ms_antennas > self.tau_p
        {
            return Err(Error::Config(format!(
                "orthogonal pilots need K*N_MS = {} <= tau_p = {}",
                self.num_users * self.ms_antennas,
                self.tau_p
            )));
        }
        self.cluster_size()?;
        self.optimizer.validate()?;
        let floor_total = self.cluster_size()? as f64 * self.eps_floor_w();
        if floor_total >= self.p_max_w {
            return Err(Error::Config("eps_floor leaves no room under p_max".into()));
        }
        Ok(())
    }
}
