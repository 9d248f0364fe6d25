//! Exact quantum trajectories of small spin rings and data-driven time
//! propagators for their single-qubit reduced dynamics.

pub mod dynamics;
pub mod error;
pub mod seed;

pub use error::{Error, Result};
pub mod dataset;
pub mod linear;
pub mod nn;
pub mod propagation;
pub mod experiments;
pub mod autoencoder;
pub mod cli;
