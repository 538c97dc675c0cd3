//! Seed splitting.
//!
//! Every random stream in a run is keyed by a 64-bit seed derived from the master seed:
//! `trial_seed = derive(master, trial_index)` and `stage_seed = derive(trial_seed, stage)`.
//! `derive` is two rounds of the SplitMix64 finalizer, so neighbouring indices give
//! unrelated streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Random stream tags inside one trial.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stage {
    Drop = 1,
    Shadowing = 2,
    SmallScale = 3,
    Pilots = 4,
    PilotNoise = 5,
    Retry = 6,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(parent: u64, index: u64) -> u64 {
    mix(mix(parent) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

pub fn stage_seed(trial_seed: u64, stage: Stage) -> u64 {
    derive(trial_seed, stage as u64)
}

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
