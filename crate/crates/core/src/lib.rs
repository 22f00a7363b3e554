pub mod algorithms;
pub mod autoencoder;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod glis;
pub mod metadataset;
pub mod problems;
pub mod sampling;
pub mod solvers;
pub mod surrogate;

pub use error::{Error, Result};
