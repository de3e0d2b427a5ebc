//! Closed-form oracles for the two worked examples.

pub mod characteristics;
pub mod example1;
pub mod example2;
pub mod strategies;

pub use characteristics::*;
pub use example1::*;
pub use example2::*;
pub use strategies::*;
