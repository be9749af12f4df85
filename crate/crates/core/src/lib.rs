pub mod cli;
pub mod dataset;
pub mod ela;
pub mod error;
pub mod loss;
pub mod nn;
pub mod optim;
pub mod plot;
pub mod training;
pub mod tensor;

pub use error::{ArchiveError, Error, Result};
