//! Attention-based models for daily snow water-equivalent (SWE) prediction.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod parallel;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
