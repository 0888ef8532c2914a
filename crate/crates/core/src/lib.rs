pub mod engine;
pub mod error;
pub mod experiments;
pub mod matrix;
pub mod permutation;
pub mod sensing;
pub mod solver;

pub use error::{Error, Result};
