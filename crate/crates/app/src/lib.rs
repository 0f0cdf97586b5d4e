//! Command-line front end and local HTTP service for `mlbn-core`.

pub mod cli;
pub mod error;
pub mod server;

pub use error::AppError;
