//! Driven collective-spin dynamics and parameter-estimation figures of merit.

pub mod error;
pub mod meanfield;
pub mod metrology;
pub mod propagation;
pub mod scans;
pub mod spin;

pub use error::{Error, Result};
