#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Bounded-rationality driving policies for a vehicle cut-in scenario, used
//! as importance-sampling proposals for near-crash probability estimation,
//! together with crude Monte Carlo and cross-entropy baselines and a
//! mixed-behavior model fitting and situation generation pipeline.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod fit;
pub mod policy;
pub mod presets;
pub mod rng;
pub mod sa;
pub mod scenario;

pub use error::{Error, Result};
