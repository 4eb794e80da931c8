//! Simulation and exact computation for independent alignment percolation
//! on `Z^d`.

pub mod cluster;
pub mod covdecay;
pub mod error;
pub mod experiments;
pub mod fixture;
pub mod hex;
pub mod lattice;
pub mod manifest;
pub mod model;
pub mod oracle;
pub mod renorm;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{Boundary, EdgeConfig, LatticeSpec};
pub use model::ModelParams;
pub use rng::RandomSource;
