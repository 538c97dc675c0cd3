//! Downlink power control for cell-free (CF) and user-centric (UC) massive MIMO.
//!
//! The crate covers the full link-level pipeline of a Monte-Carlo trial:
//!
//! - [`geometry`]: random drops and AP/user cluster association,
//! - [`channel`]: three-slope path loss, two-component correlated shadowing, Rayleigh channels,
//! - [`training`]: uplink pilots and pilot-matched channel estimation,
//! - [`linkmodel`]: channel-inversion precoding, per-link gains, log-det rates and their
//!   difference-of-concave split,
//! - [`slbm`]: successive lower-bound maximization for sum-rate and max-min power control,
//! - [`harness`]: seeded experiments and CSV/JSON emission.

pub mod channel;
pub mod config;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod linkmodel;
pub mod seed;
pub mod slbm;
pub mod training;

pub use config::{CsiMode, NetworkMode, SystemConfig};
pub use error::{Error, Result};
