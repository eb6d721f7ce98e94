pub mod baseline;
pub mod cli;
pub mod cohort;
pub mod detector;
pub mod error;
pub mod fingerprint;
pub mod pipeline;
pub mod report;
pub mod simulator;
pub mod ulsif;

pub use error::{Error, Result};
