//! Simulation of non-destructive dispersive probing of a trapped cesium
//! ensemble on the clock transition.
//!
//! The crate is organised bottom-up:
//!
//! - [`angular_momentum`]: exact Wigner 3j/6j and Clebsch-Gordan coefficients.
//! - [`cesium_model`]: the Cs D2 level scheme, dispersive phase shifts and
//!   the two-color balancing scheme.
//! - [`ensemble`]: Zeeman populations, Bloch-vector atom classes and
//!   state preparation.
//! - [`dynamics`]: microwave Rabi rotations, probe back-action and schedule
//!   execution.
//! - [`detection`]: interferometer read-out, projection-noise scans and
//!   noise decomposition.
//! - [`scenario`]: configuration, named experiment runners and output files.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angular_momentum;
pub mod cesium_model;
pub mod constants;
pub mod detection;
pub mod dynamics;
pub mod ensemble;
mod error;
pub mod fit;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
