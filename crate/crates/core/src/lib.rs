//! Far-field to near-field reconstruction for a 4×4 phased array.
//!
//! * [`em`] synthesizes exact dipole-array fields on sampling planes.
//! * [`dataset`] turns random phase excitations into paired tensors.
//! * [`nn`] is a small CNN engine with hand-written backward passes.
//! * [`train`] runs the training protocol, metrics and cross-validation.
//! * [`hyperopt`] grid-searches the architecture.
//! * [`cli`] wires it all into the `fieldnet` binary.

pub mod cli;
pub mod dataset;
pub mod em;
pub mod error;
pub mod hyperopt;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
