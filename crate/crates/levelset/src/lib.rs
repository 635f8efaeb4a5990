//! Distance-penalized change-point search on the unit interval and
//! transect-based Gaussian-process level set estimation built on top of it.
//!
//! - [`policy`] computes optimal step-fraction schedules that trade off
//!   sample count against travel distance.
//! - [`search`] executes a schedule against a noiseless binary oracle.
//! - [`posterior`] executes it against noisy measurements with a discretized
//!   Bayesian posterior.
//! - [`gp`] provides Gaussian-process regression and turns per-transect
//!   change-point estimates into a two-dimensional level set.
//! - [`sim`] holds oracles, synthetic field generation, and the Monte Carlo
//!   sweep harness.

pub mod error;
pub mod gp;
pub mod policy;
pub mod posterior;
pub mod search;
pub mod sim;

pub use error::{Error, Result};
