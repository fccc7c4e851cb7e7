//! Joint device-activity detection and channel estimation for OFDM-based
//! grant-free random access under frequency-selective fading.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] builds scenario realizations and the time-domain measurement
//!   model `Y = A X + N`, together with an explicit circulant-convolution
//!   signal path used as a correctness reference.
//! * [`denoiser`] holds the scalar Bernoulli-Gaussian MMSE denoiser and the
//!   log-domain likelihood-ratio helpers shared by both message-passing
//!   algorithms.
//! * [`amp_ec`] and [`amp_ac`] implement the two approximate-message-passing
//!   detectors (effective-channel and actual-channel variants), each with
//!   best-iterate tracking through a GROUP-LASSO surrogate.
//! * [`se`] predicts error probability and MSE analytically from the
//!   state-evolution recursion.
//! * [`metrics`] scores estimates against the truth.
//! * [`harness`] runs seeded Monte Carlo experiments and parameter sweeps and
//!   drives the `gfamp` command-line tool.
//! * [`oracle`] contains slow, independent reference computations used by the
//!   test suites and the `gfamp check` command.

pub mod amp_ac;
pub mod amp_ec;
pub mod denoiser;
mod error;
pub mod harness;
mod linalg;
pub mod problem;
pub mod rng;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod se;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
