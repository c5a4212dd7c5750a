//! Finite element laboratory for linear poro-visco-elastic dynamics.

pub mod cli;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod fields;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod oracle1d;
pub mod reductions;
pub mod sources;
pub mod timestepper;
pub mod verify;

pub use error::{Error, Result};
