//! Blinded continuous information monitoring for recurrent-event trials with
//! time-varying event rates.
//!
//! The crate implements a non-homogeneous Poisson process with Gamma frailty
//! (log-linear rate trend, negative binomial margins), unblinded maximum
//! likelihood inference with a Wald test for the log rate ratio, two blinded
//! nuisance-estimation routes (mixture and lumping), blinded Fisher
//! information estimation, a constant-rate comparator procedure, the
//! continuous monitoring loop that stops a trial at its target information,
//! and a seeded, replication-parallel Monte Carlo engine with scenario
//! configuration files and report emission.

pub mod blinded;
pub mod config;
pub mod constrate;
pub mod curve;
pub mod data;
pub mod engine;
pub mod error;
pub mod events;
mod math;
pub mod mle;
pub mod model;
pub mod monitor;
mod optim;
pub mod report;
pub mod sim;

pub use error::{Error, Result};

// The numeric helpers the integration tests and downstream tools need.
pub mod numeric {
    pub use crate::math::{
        d2exp_m1_over, dexp_m1_over, exp_m1_over, inv3, normal_cdf, normal_quantile,
    };
}
