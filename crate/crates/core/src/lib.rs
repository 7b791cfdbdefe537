//! Numerical laboratory for the two-type (active/dormant) branching random
//! walk in random environment and its parabolic Anderson model.

pub mod error;
pub mod numerics;
pub mod rng;
pub mod stats;
pub mod switching;
pub mod walker;
pub mod environment;
pub mod lattice;
pub mod estimators;
pub mod spectral;
pub mod asymptotics;
pub mod verify;

pub use error::{Error, Result};
pub use stats::McEstimate;
