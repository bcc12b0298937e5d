//! Policy optimization through smoothed importance sampling.
//!
//! The crate implements an estimator family for the off-policy value
//! difference `eta(pi_tilde) - eta(pi)` in which each timestep reweights its
//! ratio history by a suffix-encoded exponent schedule. The single-entry
//! suffix `(1)` recovers the familiar clipped-surrogate setup, an all-ones
//! suffix recovers full step-based importance sampling, and intermediate
//! schedules trade bias against variance. Around the estimators sit exact
//! tabular oracles (dense linear solves), a minibatch Adam training loop,
//! closed-form and Monte Carlo bound evaluators, and an experiment harness
//! with a CLI.

pub mod checks;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod mdp;
pub mod optimizer;
pub mod policy;
pub mod rng;
pub mod schedule;
pub mod sweep;
pub mod trajectory;

pub use error::{Error, Result};
pub use schedule::AlphaSchedule;
