//! Boosting for interval-censored survival data.
//!
//! The crate is `no_std` (it needs `alloc`) and holds the numerical core:
//!
//! - [`data`]: interval-censored observations, time grids and survivor curves.
//! - [`spline`]: natural cubic smoothing-spline smoothers and their spectral
//!   boosting operator.
//! - [`npmle`]: Turnbull's nonparametric MLE and Gaussian-kernel smoothing.
//! - [`icrf`]: interval-censored recursive forests for conditional survivor
//!   functions.
//! - [`cut`]: censoring-unbiased transformations and the CUT / IMP losses.
//! - [`boost`]: the L2Boost-CUT / L2Boost-IMP training loops.
//! - [`metrics`] and [`theory`]: evaluation metrics and closed-form MSE results.
//! - [`sim`]: synthetic AFT data.
//!
//! IO, the experiment runner and the command line live in the `icboost` crate.
#![no_std]

extern crate alloc;

pub mod boost;
pub mod cut;
pub mod data;
mod error;
pub mod icrf;
pub mod metrics;
pub mod npmle;
pub mod rng;
pub mod sim;
pub mod spline;
pub mod theory;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
