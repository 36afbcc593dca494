pub mod cli;
pub mod error;
pub mod fixtures;
mod jsonfmt;
pub mod linalg;
pub mod mapping;
pub mod morphometry;
pub mod pca;
pub mod service;
pub mod shape;
pub mod stats;

pub use error::{Error, Result};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 42;
