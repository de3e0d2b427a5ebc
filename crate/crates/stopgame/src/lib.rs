//! Zero-sum stopping games with asymmetric information on finite Markov chains.

pub mod conjugate;
pub mod envelope;
pub mod error;
pub mod examples;
pub mod grid;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod pdmp;
pub mod residual;
pub mod solver;
pub mod strategy;

pub use error::{Error, Result};
