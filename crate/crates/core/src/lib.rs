pub mod agents;
pub mod cli;
pub mod env;
pub mod error;
pub mod experiment;
pub mod market;
pub mod metrics;
pub mod nn;
pub mod report;

pub use error::{Error, Result};
