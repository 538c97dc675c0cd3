//! One Monte-Carlo trial: a random drop with its channels, evaluated at one or more operating
//! points.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::channel::{draw_channels, ChannelSet, LargeScale};
use crate::config::{CsiMode, NetworkMode, SystemConfig};
use crate::error::{Error, Result};
use crate::geometry::{drop_scenario, select_clusters, Scenario};
use crate::linkmodel::{check_estimates, stream_selector, LinkGains, PowerMatrix, RateModel, RateReport};
use crate::seed::{self, Stage};
use crate::slbm::{optimize, Objective, OptTrace};
use crate::training::{estimate_all, make_pilots, receive_pilots, PilotShape};

/// Redraws allowed when a channel estimate is too ill-conditioned to invert.
pub const MAX_REDRAWS: u64 = 8;

/// Everything random about a trial: positions, large-scale gains, true channels and estimates.
///
/// Mode, CSI, power budget and objective do not enter the draw, so one realization can be
/// evaluated at many operating points (paired comparison).
#[derive(Debug, Clone)]
pub struct Realization {
    pub trial_seed: u64,
    /// Seed the accepted draw was generated from; differs from `trial_seed` after a redraw.
    pub draw_seed: u64,
    pub redraws: u64,
    pub scenario: Scenario,
    /// True channels with pilot-matched estimates.
    pub estimated: ChannelSet,
}

impl Realization {
    pub fn draw(config: &SystemConfig, trial_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut last_err = None;
        for attempt in 0..=MAX_REDRAWS {
            let draw_seed = if attempt == 0 {
                trial_seed
            } else {
                seed::derive(seed::stage_seed(trial_seed, Stage::Retry), attempt)
            };
            let (scenario, estimated) = draw_once(config, draw_seed)?;
            let perfect = perfect_csi(&estimated);
            match check_estimates(&estimated).and_then(|_| check_estimates(&perfect)) {
                Ok(()) => {
                    return Ok(Self { trial_seed, draw_seed, redraws: attempt, scenario, estimated })
                }
                Err(e @ Error::SingularChannel { .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    /// Channel set seen by the transmitter under `csi`.
    pub fn channels(&self, csi: CsiMode) -> ChannelSet {
        match csi {
            CsiMode::Estimated => self.estimated.clone(),
            CsiMode::Perfect => perfect_csi(&self.estimated),
        }
    }
}

fn perfect_csi(estimated: &ChannelSet) -> ChannelSet {
    let mut set = estimated.clone();
    let truth = (0..set.num_users())
        .flat_map(|k| (0..set.num_aps()).map(move |m| (k, m)))
        .map(|(k, m)| estimated.g(k, m).clone())
        .collect();
    set.set_estimates(truth);
    set
}

fn draw_once(config: &SystemConfig, draw_seed: u64) -> Result<(Scenario, ChannelSet)> {
    let scenario = drop_scenario(config, seed::stage_seed(draw_seed, Stage::Drop));
    let large = LargeScale::compute(&scenario, config, seed::stage_seed(draw_seed, Stage::Shadowing))?;
    let g = draw_channels(
        &large.beta,
        config.ap_antennas,
        config.ms_antennas,
        seed::stage_seed(draw_seed, Stage::SmallScale),
    );
    let mut channels = ChannelSet::new(config.num_users, config.num_aps, g, large);
    let shape = PilotShape { users: config.num_users, ms_antennas: config.ms_antennas, tau_p: config.tau_p };
    let pilots = make_pilots(shape, config.pilot_mode, seed::stage_seed(draw_seed, Stage::Pilots))?;
    let power = vec![config.p_uplink_w; config.num_users];
    let obs = receive_pilots(
        &channels,
        &pilots,
        &power,
        config.training_noise_var(),
        seed::stage_seed(draw_seed, Stage::PilotNoise),
    );
    channels.set_estimates(estimate_all(&obs, &pilots, &power)?);
    Ok((scenario, channels))
}

/// Outcome of one trial at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub seed: u64,
    pub redraws: u64,
    pub mode: NetworkMode,
    pub csi: CsiMode,
    pub p_max_w: f64,
    pub objective: Objective,
    pub rates_uniform: RateReport,
    pub rates_optimized: RateReport,
    pub outer_iterations: usize,
    pub converged: bool,
    pub line_search_failures: usize,
    pub safeguard_activations: usize,
    /// Largest relative objective decrease between consecutive trace entries.
    pub worst_decrease: f64,
    /// Constraint violation of the returned powers, watts.
    pub feasibility_residual: f64,
    pub trace: OptTrace,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl TrialResult {
    pub fn uniform_objective(&self) -> f64 {
        self.objective.of(&self.rates_uniform.per_user)
    }

    pub fn optimized_objective(&self) -> f64 {
        self.objective.of(&self.rates_optimized.per_user)
    }
}

/// Runs the power-control pipeline on `realization` with the operating point in `config`
/// (`mode`, `N_cluster`, `csi`, `p_max_w`, `objective`, optimizer options).
pub fn evaluate(config: &SystemConfig, realization: &Realization, trial_index: usize) -> Result<TrialResult> {
    let start = Instant::now();
    config.validate()?;
    let channels = realization.channels(config.csi);
    let clusters = select_clusters(&channels.estimate_norms(), config.mode, config.cluster_size()?)?;
    let selector = stream_selector(config.ms_antennas, config.streams)?;
    let selectors = vec![selector; config.num_users];
    let gains = LinkGains::compute(&channels, &clusters, &selectors)?;
    let model = RateModel::new(&gains, config.noise_var_w(), config.bandwidth_hz);

    let uniform = PowerMatrix::uniform(&clusters, config.p_max_w);
    let rates_uniform = model.rates(&uniform)?;
    let outcome = optimize(model, config.objective, config.p_max_w, &uniform, &config.optimizer)?;
    let rates_optimized = model.rates(&outcome.power)?;
    let feasibility_residual = outcome.power.feasibility_residual(&clusters, config.p_max_w);

    Ok(TrialResult {
        trial_index,
        seed: realization.trial_seed,
        redraws: realization.redraws,
        mode: config.mode,
        csi: config.csi,
        p_max_w: config.p_max_w,
        objective: config.objective,
        rates_uniform,
        rates_optimized,
        outer_iterations: outcome.outer_iterations,
        converged: outcome.converged,
        line_search_failures: outcome.line_search_failures,
        safeguard_activations: outcome.safeguard_activations,
        worst_decrease: outcome.trace.worst_decrease(),
        feasibility_residual,
        trace: outcome.trace,
        wall_time: start.elapsed(),
    })
}

/// Draws the realization for `trial_seed` and evaluates it at `config`'s operating point.
pub fn run_trial(config: &SystemConfig, trial_seed: u64) -> Result<TrialResult> {
    let realization = Realization::draw(config, trial_seed)?;
    evaluate(config, &realization, 0)
}
