//! File formats, configuration and command-line tooling around `msgraph-core`.

pub mod cli;
pub mod config;
pub mod dictionary;
pub mod error;
pub mod events;
pub mod experiment;
pub mod mapfile;
mod num;
pub mod record;
pub mod report;
pub mod trajectory;

pub use error::Error;
