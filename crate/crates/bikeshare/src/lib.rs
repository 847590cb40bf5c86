//! File formats, stage runners, pipeline orchestration and the command-line
//! front end for bike-sharing usage analysis. The numerical work lives in
//! `bikeshare-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod plot;
pub mod schema;
pub mod stages;
pub mod synth;

pub use error::{Error, Result};
