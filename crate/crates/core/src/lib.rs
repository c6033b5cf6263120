//! Quantile processes over stochastic drivers: simulation, composite
//! distortion maps, stochastic dominance, distorted measures and
//! Monte Carlo valuation.

pub mod error;
pub mod format;
pub mod numerics;
pub mod rng;
pub mod stats;

pub mod drivers;
pub mod transforms;
pub mod dominance;
pub mod measures;
pub mod valuation;
pub mod copulas;
pub mod config;
pub mod cli;

pub use error::{Error, Result};
