//! Pipeline driver: configuration, the stage runner and a synthetic
//! fixture corpus.

pub mod config;
pub mod fixture;
pub mod stages;

pub use config::{Config, ConfigError};
pub use stages::{Pipeline, PipelineError, Stage};
