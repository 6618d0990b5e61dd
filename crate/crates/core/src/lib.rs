//! Spatio-temporal graphical Gaussian models for day-ahead forecast
//! deviations of electricity load, wind power and solar power, and a Monte
//! Carlo engine producing correlated scenarios of the actual quantities.
//!
//! The pipeline is:
//!
//! 1. [`ingest`]: hourly actuals and forecasts become a [`ingest::DeviationPanel`]
//!    over a non-anticipative history window.
//! 2. [`marginals`]: every (unit, lag) series gets an invertible marginal
//!    (GPD-tailed for load, empirical for wind and solar) used to map the
//!    deviations to standard normal scores and back.
//! 3. [`precision`]: graphical lasso and its Kronecker-separable variant
//!    estimate sparse spatial and temporal dependence.
//! 4. [`solarpca`]: solar curves are handled in a truncated PCA basis.
//! 5. [`sampler`]: Gaussian sampling, including exact conditioning on
//!    linear aggregates.
//! 6. [`engine`]: ties the above together into `fit_system` and
//!    `generate_scenarios`.
//!
//! The [`cli`] module backs the `gridscen` binary and the synthetic fixture
//! generator.

pub mod cli;
pub mod engine;
pub mod ingest;
pub mod linalg;
pub mod marginals;
pub mod precision;
pub mod sampler;
pub mod solarpca;
pub mod stats;

/// Number of hourly lags in a day-ahead horizon.
pub const NUM_LAGS: usize = 24;
