//! Network drops and AP/user association.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{NetworkMode, SystemConfig};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// AP and user positions in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub area_side: f64,
    pub ap_pos: Vec<Point>,
    pub ms_pos: Vec<Point>,
}

/// Drops `M` APs and `K` users i.i.d. uniformly over the square `[0, area_side]²`.
///
/// APs are drawn first, then users, from one stream keyed by `seed`.
pub fn drop_scenario(config: &SystemConfig, seed: u64) -> Scenario {
    let mut rng = seed::rng(seed);
    let side = config.area_side;
    let mut draw = |n: usize| -> Vec<Point> {
        (0..n)
            .map(|_| Point { x: rng.random::<f64>() * side, y: rng.random::<f64>() * side })
            .collect()
    };
    let ap_pos = draw(config.num_aps);
    let ms_pos = draw(config.num_users);
    Scenario { area_side: side, ap_pos, ms_pos }
}

impl Scenario {
    /// `K × M` matrix of user-to-AP planar distances.
    pub fn distances(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.ms_pos.len(), self.ap_pos.len(), |k, m| {
            self.ms_pos[k].distance(&self.ap_pos[m])
        })
    }

    /// Text dump with one `kind,index,x,y` line per node, 6 decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# area_side={:.6}", self.area_side);
        let _ = writeln!(out, "kind,index,x_m,y_m");
        for (i, p) in self.ap_pos.iter().enumerate() {
            let _ = writeln!(out, "ap,{i},{:.6},{:.6}", p.x, p.y);
        }
        for (i, p) in self.ms_pos.iter().enumerate() {
            let _ = writeln!(out, "ms,{i},{:.6},{:.6}", p.x, p.y);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut area_side = None;
        let mut ap_pos = Vec::new();
        let mut ms_pos = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("kind,") {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# area_side=") {
                area_side = Some(parse_f64(rest, lineno)?);
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 fields", lineno + 1)));
            }
            let idx: usize = fields[1]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad index", lineno + 1)))?;
            let p = Point { x: parse_f64(fields[2], lineno)?, y: parse_f64(fields[3], lineno)? };
            let list = match fields[0] {
                "ap" => &mut ap_pos,
                "ms" => &mut ms_pos,
                other => {
                    return Err(Error::Parse(format!("line {}: unknown kind `{other}`", lineno + 1)))
                }
            };
            if idx != list.len() {
                return Err(Error::Parse(format!("line {}: index out of order", lineno + 1)));
            }
            list.push(p);
        }
        let area_side = area_side.ok_or_else(|| Error::Parse("missing area_side header".into()))?;
        Ok(Scenario { area_side, ap_pos, ms_pos })
    }
}

fn parse_f64(s: &str, lineno: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad number `{s}`", lineno + 1)))
}

/// Which users each AP serves and which APs serve each user.
///
/// Both index lists are kept in ascending order, so a UC map with `N = K` is identical to the CF
/// map and every downstream sum runs in the same order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMap {
    /// `K(m)` for every AP.
    pub served_by_ap: Vec<Vec<usize>>,
    /// `M(k)` for every user.
    pub serving_aps: Vec<Vec<usize>>,
    num_users: usize,
    mask: Vec<bool>,
}

impl ClusterMap {
    /// Builds the map from `K(m)` lists and derives `M(k)` by inversion.
    pub fn from_served_sets(num_users: usize, mut served_by_ap: Vec<Vec<usize>>) -> Result<Self> {
        let num_aps = served_by_ap.len();
        let mut mask = vec![false; num_users * num_aps];
        let mut serving_aps = vec![Vec::new(); num_users];
        for (m, set) in served_by_ap.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            for &k in set.iter() {
                if k >= num_users {
                    return Err(Error::Config(format!("user index {k} out of range")));
                }
                mask[k * num_aps + m] = true;
                serving_aps[k].push(m);
            }
        }
        Ok(Self { served_by_ap, serving_aps, num_users, mask })
    }

    /// Every AP serves every user.
    pub fn cell_free(num_users: usize, num_aps: usize) -> Self {
        Self::from_served_sets(num_users, vec![(0..num_users).collect(); num_aps])
            .expect("indices are in range")
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_aps(&self) -> usize {
        self.served_by_ap.len()
    }

    /// `k ∈ K(m)`.
    pub fn serves(&self, m: usize, k: usize) -> bool {
        self.mask[k * self.num_aps() + m]
    }
}

/// Selects `K(m)` as the `N_cluster` users with the largest estimated channel norm at AP `m`
/// (ties go to the smaller user index); CF mode assigns all users to every AP.
///
/// `norms` is the `K × M` matrix of `‖Ĝ_{k,m}‖_F`.
pub fn select_clusters(norms: &DMatrix<f64>, mode: NetworkMode, n_cluster: usize) -> Result<ClusterMap> {
    let (num_users, num_aps) = norms.shape();
    match mode {
        NetworkMode::Cf => Ok(ClusterMap::cell_free(num_users, num_aps)),
        NetworkMode::Uc => {
            if n_cluster == 0 || n_cluster > num_users {
                return Err(Error::Config(format!(
                    "N_cluster = {n_cluster} must lie in 1..={num_users}"
                )));
            }
            let sets = (0..num_aps)
                .map(|m| {
                    let mut order: Vec<usize> = (0..num_users).collect();
                    order.sort_by(|&a, &b| {
                        norms[(b, m)].total_cmp(&norms[(a, m)]).then(a.cmp(&b))
                    });
                    order.truncate(n_cluster);
                    order
                })
                .collect();
            ClusterMap::from_served_sets(num_users, sets)
        }
    }
}
