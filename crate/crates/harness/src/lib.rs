//! Configuration, persistence and experiment orchestration for `gbpm`.

pub mod config;
pub mod error;
pub mod experiment;
pub mod persist;
pub mod report;
pub mod seeds;
pub mod verify;

pub use error::{HarnessError, Result};
