use thiserror::Error;

use crate::solver::ValueGrid;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (bad dimensions, invalid generator, ...).
    #[error("invalid input: {0}")]
    Input(String),
    /// A computed object broke an invariant it must satisfy.
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("no convergence after {iterations} iterations (last sup-norm change {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        grid: Box<ValueGrid>,
    },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn integrity(msg: impl Into<String>) -> Self {
        Error::Integrity(msg.into())
    }

    pub fn is_input(&self) -> bool {
        matches!(self, Error::Input(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
