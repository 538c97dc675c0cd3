//! Channel-inversion precoding, per-link gains and log-det rates.
//!
//! The rate of user `k` is `W log2 det(I + R_k⁻¹ A_{k,k} A_{k,k}ᴴ)` with interference-plus-noise
//! covariance `R_k = σ² L_kᴴ L_k + Σ_{j≠k} A_{k,j} A_{k,j}ᴴ` and composite gains
//! `A_{k,j} = Σ_{m∈M(j)} √η_{j,m} A_{k,j,m}`. Writing it as `g1 - g2` with
//! `g1 = W log2 det(R_k + A_{k,k} A_{k,k}ᴴ)` and `g2 = W log2 det(R_k)` gives the split used by
//! the power-control algorithms.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::geometry::ClusterMap;
use crate::linalg::{add_outer, gram_condition, small_chol, small_chol_inverse, CMat, HpdFactor};

/// Largest accepted condition number of `ĜᴴĜ`.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `L_k = I_P ⊗ 1_{N_MS/P}`: sums groups of `N_MS/P` receive antennas into `P` streams.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSelector {
    pub l: CMat,
}

pub fn stream_selector(ms_antennas: usize, streams: usize) -> Result<StreamSelector> {
    if streams == 0 || ms_antennas % streams != 0 {
        return Err(Error::Config(format!(
            "P_k = {streams} must divide N_MS = {ms_antennas}"
        )));
    }
    let group = ms_antennas / streams;
    let l = CMat::from_fn(ms_antennas, streams, |r, c| if r / group == c { real(1.0) } else { real(0.0) });
    Ok(StreamSelector { l })
}

impl StreamSelector {
    pub fn streams(&self) -> usize {
        self.l.ncols()
    }

    /// `L_kᴴ L_k = (N_MS/P) I`.
    pub fn gram(&self) -> CMat {
        self.l.adjoint() * &self.l
    }
}

fn check_gram(g_hat: &CMat, user: usize, ap: usize) -> Result<()> {
    let condition = gram_condition(g_hat);
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::SingularChannel { user, ap, condition });
    }
    Ok(())
}

/// `Ĝ (ĜᴴĜ)⁻¹ L`, the unnormalized channel-inversion beam.
fn inversion_beam(g_hat: &CMat, l: &CMat) -> Result<CMat> {
    let gram = g_hat.adjoint() * g_hat;
    let x = HpdFactor::new(&gram)?.solve(l);
    Ok(g_hat * x)
}

/// Trace-normalized channel-inversion precoder
/// `Q = Ĝ(ĜᴴĜ)⁻¹L / √tr(Lᴴ(ĜᴴĜ)⁻¹L)`, so that `tr(QᴴQ) = 1`.
pub fn precoder(g_hat: &CMat, selector: &StreamSelector) -> Result<CMat> {
    check_gram(g_hat, 0, 0)?;
    let gram = g_hat.adjoint() * g_hat;
    let x = HpdFactor::new(&gram)?.solve(&selector.l);
    let norm = (selector.l.adjoint() * &x).trace().re;
    if !(norm > 0.0) {
        return Err(Error::Numerical("precoder normalization is not positive".into()));
    }
    Ok(g_hat * x * real(1.0 / norm.sqrt()))
}

/// `A_{k,j,m} = L_kᴴ G_{k,m}ᴴ Ĝ_{j,m} (Ĝ_{j,m}ᴴ Ĝ_{j,m})⁻¹ L_j`.
pub fn effective_gain(g_km: &CMat, g_hat_jm: &CMat, l_k: &StreamSelector, l_j: &StreamSelector) -> Result<CMat> {
    check_gram(g_hat_jm, 0, 0)?;
    let beam = inversion_beam(g_hat_jm, &l_j.l)?;
    Ok(l_k.l.adjoint() * g_km.adjoint() * beam)
}

/// Fails with [`Error::SingularChannel`] if any estimate has an ill-conditioned Gram matrix.
pub fn check_estimates(channels: &ChannelSet) -> Result<()> {
    for k in 0..channels.num_users() {
        for m in 0..channels.num_aps() {
            check_gram(channels.g_hat(k, m), k, m)?;
        }
    }
    Ok(())
}

/// `A_{k,j,m}` for every user pair and AP, stored as zero where `m ∉ M(j)`.
#[derive(Debug, Clone)]
pub struct LinkGains {
    num_users: usize,
    num_aps: usize,
    /// `L_kᴴ L_k` per user.
    selector_gram: Vec<CMat>,
    a: Vec<CMat>,
    clusters: ClusterMap,
}

impl LinkGains {
    pub fn compute(channels: &ChannelSet, clusters: &ClusterMap, selectors: &[StreamSelector]) -> Result<Self> {
        let (num_users, num_aps) = (channels.num_users(), channels.num_aps());
        assert_eq!(selectors.len(), num_users);
        let mut beams: Vec<Option<CMat>> = vec![None; num_users * num_aps];
        for j in 0..num_users {
            for &m in &clusters.serving_aps[j] {
                check_gram(channels.g_hat(j, m), j, m)?;
                beams[j * num_aps + m] = Some(inversion_beam(channels.g_hat(j, m), &selectors[j].l)?);
            }
        }
        let mut a = Vec::with_capacity(num_users * num_users * num_aps);
        for k in 0..num_users {
            let lk_h = selectors[k].l.adjoint();
            for j in 0..num_users {
                for m in 0..num_aps {
                    a.push(match &beams[j * num_aps + m] {
                        Some(beam) => &lk_h * channels.g(k, m).adjoint() * beam,
                        None => CMat::zeros(selectors[k].streams(), selectors[j].streams()),
                    });
                }
            }
        }
        let selector_gram = selectors.iter().map(StreamSelector::gram).collect();
        Ok(Self { num_users, num_aps, selector_gram, a, clusters: clusters.clone() })
    }

    /// Assembles gains from raw blocks; `a` is indexed `(k * K + j) * M + m`. Entries with
    /// `m ∉ M(j)` are zeroed.
    pub fn from_parts(selector_gram: Vec<CMat>, mut a: Vec<CMat>, clusters: ClusterMap) -> Result<Self> {
        let num_users = clusters.num_users();
        let num_aps = clusters.num_aps();
        if selector_gram.len() != num_users || a.len() != num_users * num_users * num_aps {
            return Err(Error::Domain("link-gain dimensions do not match the cluster map".into()));
        }
        for k in 0..num_users {
            for j in 0..num_users {
                for m in 0..num_aps {
                    let blk = &mut a[(k * num_users + j) * num_aps + m];
                    if blk.nrows() != selector_gram[k].nrows() || blk.ncols() != selector_gram[j].nrows() {
                        return Err(Error::Domain(format!("A[{k},{j},{m}] has the wrong shape")));
                    }
                    if !clusters.serves(m, j) {
                        blk.fill(real(0.0));
                    }
                }
            }
        }
        Ok(Self { num_users, num_aps, selector_gram, a, clusters })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn clusters(&self) -> &ClusterMap {
        &self.clusters
    }

    pub fn selector_gram(&self, k: usize) -> &CMat {
        &self.selector_gram[k]
    }

    /// `A_{k,j,m}`.
    pub fn a(&self, k: usize, j: usize, m: usize) -> &CMat {
        &self.a[(k * self.num_users + j) * self.num_aps + m]
    }

    /// `A_{k,j} = Σ_{m∈M(j)} √η_{j,m} A_{k,j,m}`.
    pub fn composite(&self, eta: &PowerMatrix, k: usize, j: usize) -> CMat {
        self.composite_excluding(eta, k, j, None)
    }

    fn composite_excluding(&self, eta: &PowerMatrix, k: usize, j: usize, skip: Option<usize>) -> CMat {
        let mut b = CMat::zeros(self.selector_gram[k].nrows(), self.selector_gram[j].nrows());
        for &m in &self.clusters.serving_aps[j] {
            if Some(m) == skip {
                continue;
            }
            let w = eta.get(j, m);
            if w > 0.0 {
                b += self.a(k, j, m) * real(w.sqrt());
            }
        }
        b
    }
}

/// `Σ_{m∈M(j)} √η_{j,m} A_{k,j,m}` from explicit parts.
///
/// `a_kj` and `eta_row_j` are indexed by AP; only the APs in `serving` contribute.
pub fn composite_gain(a_kj: &[CMat], eta_row_j: &[f64], serving: &[usize]) -> Result<CMat> {
    let first = a_kj.first().ok_or_else(|| Error::Domain("no link gains".into()))?;
    let mut b = CMat::zeros(first.nrows(), first.ncols());
    for &m in serving {
        let w = eta_row_j[m];
        if !(w >= 0.0) {
            return Err(Error::Domain(format!("negative power {w} at AP {m}")));
        }
        b += &a_kj[m] * real(w.sqrt());
    }
    Ok(b)
}

/// Downlink powers `η_{k,m}` in watts (`K × M`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMatrix {
    pub eta: DMatrix<f64>,
}

impl PowerMatrix {
    pub fn zeros(num_users: usize, num_aps: usize) -> Self {
        Self { eta: DMatrix::zeros(num_users, num_aps) }
    }

    /// Every AP splits its budget evenly over its cluster.
    pub fn uniform(clusters: &ClusterMap, p_max: f64) -> Self {
        let mut eta = DMatrix::zeros(clusters.num_users(), clusters.num_aps());
        for (m, set) in clusters.served_by_ap.iter().enumerate() {
            for &k in set {
                eta[(k, m)] = p_max / set.len() as f64;
            }
        }
        Self { eta }
    }

    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.eta[(k, m)]
    }

    /// Largest violation of `η ≥ 0`, `Σ_{k∈K(m)} η_{k,m} ≤ P_max` and the cluster support.
    pub fn feasibility_residual(&self, clusters: &ClusterMap, p_max: f64) -> f64 {
        let mut worst = 0.0f64;
        for m in 0..self.eta.ncols() {
            let mut total = 0.0;
            for k in 0..self.eta.nrows() {
                let v = self.eta[(k, m)];
                if clusters.serves(m, k) {
                    worst = worst.max(-v);
                    total += v;
                } else {
                    worst = worst.max(v.abs());
                }
            }
            worst = worst.max(total - p_max);
        }
        worst
    }
}

/// Per-user rates in bit/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub per_user: Vec<f64>,
    pub sum_rate: f64,
    pub min_rate: f64,
}

impl RateReport {
    pub fn from_rates(per_user: Vec<f64>) -> Self {
        let sum_rate = per_user.iter().sum();
        let min_rate = per_user.iter().cloned().fold(f64::INFINITY, f64::min);
        Self { per_user, sum_rate, min_rate }
    }
}

/// Rate evaluation for a fixed set of link gains.
#[derive(Debug, Clone, Copy)]
pub struct RateModel<'a> {
    pub gains: &'a LinkGains,
    /// Downlink noise power `σ_z²`, watts.
    pub noise_var: f64,
    /// Bandwidth `W`, Hz.
    pub bandwidth: f64,
}

impl<'a> RateModel<'a> {
    pub fn new(gains: &'a LinkGains, noise_var: f64, bandwidth: f64) -> Self {
        Self { gains, noise_var, bandwidth }
    }

    fn check_powers(&self, eta: &PowerMatrix) -> Result<()> {
        if eta.eta.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Domain("powers must be nonnegative".into()));
        }
        Ok(())
    }

    fn noise_cov(&self, k: usize) -> CMat {
        self.gains.selector_gram(k) * real(self.noise_var)
    }

    /// `(g1, g2)` with `R_k = g1 - g2`.
    pub fn dc_parts(&self, eta: &PowerMatrix, k: usize) -> Result<(f64, f64)> {
        self.check_powers(eta)?;
        let mut cov = self.noise_cov(k);
        for j in 0..self.gains.num_users() {
            if j != k {
                add_outer(&mut cov, &self.gains.composite(eta, k, j));
            }
        }
        let g2 = HpdFactor::new(&cov)?.ln_det();
        add_outer(&mut cov, &self.gains.composite(eta, k, k));
        let g1 = HpdFactor::new(&cov)?.ln_det();
        let scale = self.bandwidth / LN_2;
        Ok((scale * g1, scale * g2))
    }

    pub fn user_rate(&self, eta: &PowerMatrix, k: usize) -> Result<f64> {
        let (g1, g2) = self.dc_parts(eta, k)?;
        Ok((g1 - g2).max(0.0))
    }

    pub fn rates(&self, eta: &PowerMatrix) -> Result<RateReport> {
        let per_user = (0..self.gains.num_users())
            .map(|k| self.user_rate(eta, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(RateReport::from_rates(per_user))
    }

    /// `∇g2` of user `k` with respect to the powers `{η_{j,m} : j ∈ K(m)}` of AP `m`, in the
    /// order of `K(m)`.
    pub fn grad_g2(&self, eta: &PowerMatrix, m: usize, k: usize, eps_floor: f64) -> Result<Vec<f64>> {
        let block = BlockRates::new(*self, eta, m)?;
        let x = block.current(eta);
        block.check_floor(&x, eps_floor)?;
        block.user(k, &x, true)?.grad_g2(&x)
    }

    /// Concave-minus-linear minorant of `R_k` in the block of AP `m`:
    /// `g1(η_m) - g2(η_{m,0}) - ∇g2(η_{m,0})ᵀ(η_m - η_{m,0})`.
    ///
    /// `eta0` supplies the expansion point `η_{m,0}` and every other block; `eta_m` holds the
    /// block values in the order of `K(m)`.
    pub fn rate_lower_bound(
        &self,
        eta0: &PowerMatrix,
        m: usize,
        eta_m: &[f64],
        k: usize,
        eps_floor: f64,
    ) -> Result<f64> {
        let block = BlockRates::new(*self, eta0, m)?;
        let x0 = block.current(eta0);
        block.check_floor(&x0, eps_floor)?;
        let lin = block.linearize(&x0)?;
        Ok(block.user(k, eta_m, false)?.g1 - lin.affine(k, eta_m))
    }
}

/// Rates of every user as a function of the powers of one AP, all other powers frozen.
///
/// Per user the covariance splits into a frozen part and one rank-`P` update per served user of
/// the AP, so evaluating a block point costs `O(K · |K(m)|)` small products.
#[derive(Debug, Clone)]
pub struct BlockRates<'a> {
    model: RateModel<'a>,
    ap: usize,
    members: Vec<usize>,
    /// Stream count; every gain below is `dim × dim`, stored column-major.
    dim: usize,
    users: Vec<UserBlock>,
}

#[derive(Debug, Clone)]
struct UserBlock {
    /// `σ² LᴴL + Σ_{j∉K(m)} A_{k,j} A_{k,j}ᴴ`.
    frozen_all: Vec<Complex64>,
    /// Same, without `j = k`.
    frozen_interf: Vec<Complex64>,
    /// `A_{k,j}` without the contribution of AP `m`, for `j ∈ K(m)`, concatenated.
    rest: Vec<Complex64>,
    /// `A_{k,j,m}` for `j ∈ K(m)`, concatenated.
    gain: Vec<Complex64>,
}

/// Which amplitude gradients [`BlockRates::eval_into`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gradients {
    None,
    G1,
    Both,
}

/// Work buffers for repeated block evaluations.
#[derive(Debug, Clone)]
pub struct EvalScratch {
    m1: Vec<Complex64>,
    m2: Vec<Complex64>,
    b: Vec<Complex64>,
    inv: Vec<Complex64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    pub amp_grad_g1: Vec<f64>,
    pub amp_grad_g2: Vec<f64>,
}

/// `g1`, `g2` (bit/s) and optionally their gradients over the block with respect to the
/// amplitudes `√η_{j,m}` (bit/s/√W). Unlike the power gradients these stay finite at zero power.
#[derive(Debug, Clone)]
pub struct UserEval {
    pub g1: f64,
    pub g2: f64,
    pub amp_grad_g1: Vec<f64>,
    pub amp_grad_g2: Vec<f64>,
}

impl UserEval {
    pub fn rate(&self) -> f64 {
        self.g1 - self.g2
    }

    /// `∇g1` with respect to the powers at block point `x`.
    pub fn grad_g1(&self, x: &[f64]) -> Result<Vec<f64>> {
        amp_to_power_grad(&self.amp_grad_g1, x)
    }

    /// `∇g2` with respect to the powers at block point `x`.
    pub fn grad_g2(&self, x: &[f64]) -> Result<Vec<f64>> {
        amp_to_power_grad(&self.amp_grad_g2, x)
    }
}

/// `∂f/∂η = (∂f/∂√η) / (2√η)`.
fn amp_to_power_grad(amp: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    amp.iter()
        .zip(x)
        .map(|(g, &xi)| {
            if xi > 0.0 {
                Ok(g / (2.0 * xi.sqrt()))
            } else {
                Err(Error::Domain("power gradient undefined at zero power".into()))
            }
        })
        .collect()
}

/// First-order expansion of every `g2_k` at a block point.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub x0: Vec<f64>,
    pub g2: Vec<f64>,
    pub grad: Vec<Vec<f64>>,
}

impl Linearization {
    /// `g2_k(x0) + ∇g2_k(x0)ᵀ(x - x0)`.
    pub fn affine(&self, k: usize, x: &[f64]) -> f64 {
        self.g2[k]
            + self.grad[k].iter().zip(x).zip(&self.x0).map(|((g, x), x0)| g * (x - x0)).sum::<f64>()
    }
}

impl<'a> BlockRates<'a> {
    pub fn new(model: RateModel<'a>, eta: &PowerMatrix, ap: usize) -> Result<Self> {
        model.check_powers(eta)?;
        let gains = model.gains;
        let members = gains.clusters().served_by_ap[ap].clone();
        let num_users = gains.num_users();
        let mut users = Vec::with_capacity(num_users);
        for k in 0..num_users {
            let mut frozen_interf = model.noise_cov(k);
            let mut own = None;
            let mut rest = Vec::new();
            let mut gain = Vec::new();
            for j in 0..num_users {
                if members.binary_search(&j).is_ok() {
                    rest.extend(gains.composite_excluding(eta, k, j, Some(ap)).iter());
                    gain.extend(gains.a(k, j, ap).iter());
                } else if j == k {
                    own = Some(gains.composite(eta, k, k));
                } else {
                    add_outer(&mut frozen_interf, &gains.composite(eta, k, j));
                }
            }
            let mut frozen_all = frozen_interf.clone();
            if let Some(b) = own {
                add_outer(&mut frozen_all, &b);
            }
            users.push(UserBlock {
                frozen_all: frozen_all.iter().cloned().collect(),
                frozen_interf: frozen_interf.iter().cloned().collect(),
                rest,
                gain,
            });
        }
        let dim = gains.selector_gram(0).nrows();
        Ok(Self { model, ap, members, dim, users })
    }

    pub fn ap(&self) -> usize {
        self.ap
    }

    /// `K(m)`.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn bandwidth(&self) -> f64 {
        self.model.bandwidth
    }

    /// Current block values `η_{j,m}`, `j ∈ K(m)`.
    pub fn current(&self, eta: &PowerMatrix) -> Vec<f64> {
        self.members.iter().map(|&j| eta.get(j, self.ap)).collect()
    }

    /// Writes block values back into a power matrix.
    pub fn write(&self, eta: &mut PowerMatrix, x: &[f64]) {
        for (&j, &v) in self.members.iter().zip(x) {
            eta.eta[(j, self.ap)] = v;
        }
    }

    pub fn check_floor(&self, x: &[f64], eps_floor: f64) -> Result<()> {
        if let Some(v) = x.iter().find(|v| !(**v >= eps_floor)) {
            return Err(Error::Domain(format!(
                "block power {v:e} below the floor {eps_floor:e}; project first"
            )));
        }
        Ok(())
    }

    /// Reusable buffers for [`BlockRates::eval_into`].
    pub fn scratch(&self) -> EvalScratch {
        let pp = self.dim * self.dim;
        let zero = Complex64::new(0.0, 0.0);
        EvalScratch {
            m1: vec![zero; pp],
            m2: vec![zero; pp],
            b: vec![zero; pp * self.members.len()],
            inv: vec![zero; pp],
            d1: vec![0.0; self.dim],
            d2: vec![0.0; self.dim],
            amp_grad_g1: vec![0.0; self.members.len()],
            amp_grad_g2: vec![0.0; self.members.len()],
        }
    }

    /// `(g1_k, g2_k)` at block point `x`; the requested amplitude gradients are left in
    /// `s.amp_grad_g1` and `s.amp_grad_g2`.
    pub fn eval_into(&self, k: usize, x: &[f64], grad: Gradients, s: &mut EvalScratch) -> Result<(f64, f64)> {
        let u = &self.users[k];
        let p = self.dim;
        let pp = p * p;
        s.m1.copy_from_slice(&u.frozen_all);
        s.m2.copy_from_slice(&u.frozen_interf);
        s.b.copy_from_slice(&u.rest);
        for (i, &j) in self.members.iter().enumerate() {
            let xi = x[i];
            if !(xi >= 0.0) {
                return Err(Error::Domain(format!("negative block power {xi}")));
            }
            let amp = xi.sqrt();
            let bi = &mut s.b[i * pp..(i + 1) * pp];
            for (bv, gv) in bi.iter_mut().zip(&u.gain[i * pp..(i + 1) * pp]) {
                *bv += gv * amp;
            }
            // lower triangle of B Bᴴ is all the factorization reads
            for c in 0..p {
                for r in c..p {
                    let mut v = Complex64::new(0.0, 0.0);
                    for t in 0..p {
                        v += bi[r + t * p] * bi[c + t * p].conj();
                    }
                    s.m1[r + c * p] += v;
                    if j != k {
                        s.m2[r + c * p] += v;
                    }
                }
            }
        }
        let ln1 = small_chol(&mut s.m1, p, &mut s.d1)?;
        let ln2 = small_chol(&mut s.m2, p, &mut s.d2)?;
        let scale = self.model.bandwidth / LN_2;
        if grad != Gradients::None {
            // d log det(M) / d√η = 2 Re tr(M⁻¹ A Bᴴ)
            small_chol_inverse(&s.m1, p, &s.d1, &mut s.inv);
            for i in 0..self.members.len() {
                let (bi, gi) = (&s.b[i * pp..(i + 1) * pp], &u.gain[i * pp..(i + 1) * pp]);
                s.amp_grad_g1[i] = 2.0 * scale * re_trace_inv_gain(&s.inv, gi, bi, p);
            }
        }
        if grad == Gradients::Both {
            small_chol_inverse(&s.m2, p, &s.d2, &mut s.inv);
            for (i, &j) in self.members.iter().enumerate() {
                let (bi, gi) = (&s.b[i * pp..(i + 1) * pp], &u.gain[i * pp..(i + 1) * pp]);
                s.amp_grad_g2[i] = if j != k { 2.0 * scale * re_trace_inv_gain(&s.inv, gi, bi, p) } else { 0.0 };
            }
        }
        Ok((scale * ln1, scale * ln2))
    }

    /// `g1_k`, `g2_k` (and gradients when `grad` is set) at block point `x`.
    pub fn user(&self, k: usize, x: &[f64], grad: bool) -> Result<UserEval> {
        let mut s = self.scratch();
        let mode = if grad { Gradients::Both } else { Gradients::None };
        let (g1, g2) = self.eval_into(k, x, mode, &mut s)?;
        let (amp_grad_g1, amp_grad_g2) =
            if grad { (s.amp_grad_g1, s.amp_grad_g2) } else { (Vec::new(), Vec::new()) };
        Ok(UserEval { g1, g2, amp_grad_g1, amp_grad_g2 })
    }

    /// True rates of every user at block point `x`.
    pub fn rates(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut s = self.scratch();
        (0..self.users.len()).map(|k| self.eval_into(k, x, Gradients::None, &mut s).map(|(g1, g2)| g1 - g2)).collect()
    }

    pub fn linearize(&self, x0: &[f64]) -> Result<Linearization> {
        let mut g2 = Vec::with_capacity(self.users.len());
        let mut grad = Vec::with_capacity(self.users.len());
        for k in 0..self.users.len() {
            let e = self.user(k, x0, true)?;
            g2.push(e.g2);
            grad.push(e.grad_g2(x0)?);
        }
        Ok(Linearization { x0: x0.to_vec(), g2, grad })
    }
}

/// `Re tr(M⁻¹ A Bᴴ)` on flat column-major `p × p` buffers.
fn re_trace_inv_gain(inv: &[Complex64], a: &[Complex64], b: &[Complex64], p: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..p {
        for r in 0..p {
            let mut v = Complex64::new(0.0, 0.0);
            for t in 0..p {
                v += inv[r + t * p] * a[t + c * p];
            }
            acc += b[r + c * p].re * v.re + b[r + c * p].im * v.im;
        }
    }
    acc
}

/// Hessian of `√(xy)` for `x, y > 0`.
pub fn sqrt_product_hessian(x: f64, y: f64) -> [[f64; 2]; 2] {
    let s = (x * y).sqrt();
    let fxx = -0.25 * s / (x * x);
    let fyy = -0.25 * s / (y * y);
    let fxy = 0.25 / s;
    [[fxx, fxy], [fxy, fyy]]
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn symmetric_eigenvalues_2x2(h: [[f64; 2]; 2]) -> [f64; 2] {
    let mean = 0.5 * (h[0][0] + h[1][1]);
    let half_diff = 0.5 * (h[0][0] - h[1][1]);
    let r = half_diff.hypot(h[0][1]);
    [mean - r, mean + r]
}
