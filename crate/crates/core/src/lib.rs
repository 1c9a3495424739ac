//! Statevector simulation, quantum model zoo, training loops and
//! prediction-error experiments for parameterized quantum circuit models.

pub mod circuits;
pub mod compile;
pub mod denoise;
pub mod entropy;
pub mod error;
pub mod experiments;
pub mod models;
pub mod phases;
pub mod statevec;
pub mod train;

pub use error::{Error, Result};
