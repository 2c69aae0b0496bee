//! Driver for the pfsmc sampler: synthetic data for the two benchmark
//! problems, timed experiments, speedup tables and parameter plots.

pub mod data;
mod error;
pub mod experiment;
pub mod format;
pub mod problem;
pub mod report;
pub mod speedup;
pub mod sweep;

pub use error::BenchError;
