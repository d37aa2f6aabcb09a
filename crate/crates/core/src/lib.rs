//! Collaborative big/little decoding with fallback and rollback policies,
//! a speculative-sampling baseline, toy language models and an analytical
//! cost model.

pub mod baselines;
pub mod cli;
pub mod costmodel;
pub mod engine;
pub mod error;
pub mod lm;
pub mod metrics;
pub mod policies;
pub mod toymodels;

pub use error::{Error, Result};
