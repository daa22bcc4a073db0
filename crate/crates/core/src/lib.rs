//! Simulation and online control of linear dynamical systems under
//! adversarial or stochastic perturbations.

pub mod error;
pub mod filtering;
pub mod harness;
pub mod lds;
pub mod linalg;
pub mod online;
pub mod optimal;
pub mod par;
pub mod policies;
pub mod seeds;
pub mod sysid;

pub use error::{Error, Result};
