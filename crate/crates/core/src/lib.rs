pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod fit;
pub mod fixtures;
pub mod graph;
pub mod model;
pub mod perm;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod valuation;

pub use error::{Error, Result};
