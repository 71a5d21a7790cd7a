//! Simulation studies, file formats and the command line for boosting with
//! interval-censored responses. The numerical work lives in `icboost-core`.

pub mod benchmark;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod manifest;
pub mod model;
pub mod parallel;
pub mod verify;

pub use error::{AppError, AppResult};
pub use icboost_core as core;
