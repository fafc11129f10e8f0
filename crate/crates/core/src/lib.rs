//! Demographic fairness auditing for biometric comparison scores.

pub mod audit;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod io;
pub mod openset;
pub mod report;
pub mod resample;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
