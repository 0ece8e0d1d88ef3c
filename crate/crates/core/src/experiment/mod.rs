//! Experiment harness: scenarios, single cells, sweeps and the verify suite.

pub mod config;
pub mod harness;
pub mod scenario;
pub mod sweep;
pub mod verify;
