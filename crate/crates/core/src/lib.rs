pub mod bounds;
pub mod cli;
pub mod coupling;
pub mod data;
pub mod distributions;
pub mod error;
pub mod inference;
pub mod estimation;
pub mod lp_oracle;
pub mod models;
pub mod noncompliance;
pub mod scalar;
pub mod simulation;

pub use error::{Error, Result};
