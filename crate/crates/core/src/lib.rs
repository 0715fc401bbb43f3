pub mod baselines;
pub mod cohort;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod io;
pub mod nn;
pub mod stats;

pub use error::{ErrorCategory, Result, ScsrError};
