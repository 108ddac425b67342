pub mod cli;
pub mod error;
pub mod graph;
pub mod manifest;
pub mod mem;
pub mod metrics;
pub mod model;
pub mod par;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
