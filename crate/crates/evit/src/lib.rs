//! Decision framework for selecting information-transfer strategies in
//! population-based structural health monitoring.
//!
//! The library simulates a population of mass-spring structures, learns
//! how post-transfer prediction quality depends on structural similarity,
//! and recommends the transfer strategy (source subset plus algorithm)
//! that maximises the expected value of information transfer net of
//! transfer costs, so that negative transfer is avoided.
//!
//! Pipeline stages, each exposed as a CLI subcommand:
//!
//! 1. [`population`] generates the synthetic population;
//! 2. [`quality`] runs pseudo-transfers between labelled sources and fits
//!    per-algorithm similarity-to-quality regressors;
//! 3. [`decision`] enumerates candidate strategies, computes expected
//!    utilities and EVIT, and ranks them;
//! 4. [`evaluation`] replays every strategy against the simulation's
//!    hidden target labels to measure regret and negative-transfer
//!    avoidance.

pub mod cli;
pub mod config;
pub mod decision;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod gp;
pub mod population;
pub mod quality;
pub mod rng;
pub mod similarity;
pub mod transfer;

pub use error::{EvitError, Result};
