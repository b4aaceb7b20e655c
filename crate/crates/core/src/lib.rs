//! Structural household-econometrics toolkit: marginal treatment effects,
//! unitary and collective labor-supply likelihoods, sharing-rule recovery,
//! and a forward simulator.

pub mod auxiliary;
pub mod data;
pub mod error;
pub mod household;
pub mod mte;
pub mod output;
pub mod pipeline;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
