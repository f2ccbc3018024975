//! Benchmark and test problems.

pub mod quadratic;
pub mod reference;
pub mod regression;
pub mod spectral;
pub mod streaming;
pub mod usv;
