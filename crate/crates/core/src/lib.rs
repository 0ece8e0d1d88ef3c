//! Pessimistic nonlinear least-squares value iteration for offline
//! reinforcement learning on finite episodic MDPs, together with the exact
//! oracles used to check it.

// `!(x > 0.0)` rejects NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bonus;
pub mod class;
pub mod data;
pub mod divergence;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod mdp;
pub mod pnlsvi;
pub mod regression;
pub mod table;

pub use error::{Error, Result};
