//! Optimal centralized and decentralized signaling mechanisms for
//! multi-location service systems, with brute-force oracles and checks of
//! the decentralization performance bounds.

pub mod bounds;
pub mod centralized;
pub mod cli;
pub mod decentralized;
pub mod error;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod random;

pub use error::{Error, Result};
pub use model::{
    CentralizedMechanism, CustomerStrategy, DecentralizedMechanism, EvaluationReport,
    LocalMechanism, LocationModel, PriorMode, SystemModel,
};

/// Tolerance used when checking the performance guarantees.
pub const GUARANTEE_TOL: f64 = 1e-7;
