//! Experiment drivers, data ingestion and reporting for `privdist`.
//!
//! Every driver takes a validated [`ExperimentConfig`] and returns a
//! [`Report`] that embeds the configuration, so any report can be rerun.

pub mod cli;
pub mod config;
pub mod data;
mod error;
pub mod experiments;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use report::{Record, Report};
