pub mod contamination;
pub mod erm;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod ipm;
pub mod sampling;
pub mod smoothness;

pub use error::{Error, Result};
