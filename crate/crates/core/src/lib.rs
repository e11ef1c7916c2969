pub mod amr;
pub mod cli;
pub mod data;
pub mod decoder;
pub mod encoders;
pub mod metrics;
pub mod model;
mod error;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
