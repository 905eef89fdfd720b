//! Exact Dicke-basis simulation of one-axis-twisting squeezing on an array of
//! two-mode condensates, a swap-Ramsey magnetometry sequence, and the
//! estimators used to analyze the resulting shot records.

pub mod error;
pub mod estimators;
pub mod io;
pub mod lattice;
pub mod loss;
pub mod magnetometry;
pub mod measurement;
pub mod noise;
pub mod pipeline;
pub mod presets;
pub mod rng;
pub mod sequence;
pub mod spin;
pub mod units;

pub use error::{Error, Result};
