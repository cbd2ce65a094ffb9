pub mod ablation;
pub mod baseline;
pub mod cli;
pub mod cohort;
pub mod error;
pub mod eval;
pub mod report;
pub mod rng;
pub mod synth;
pub mod roc;
pub mod targets;

pub use error::{Error, Result};
