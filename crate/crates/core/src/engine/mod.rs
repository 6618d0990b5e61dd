//! End-to-end scenario generation for load, wind and solar.
//!
//! Fitting Gaussianizes every (unit, lag) series, fits one separable
//! Gaussian model per quantity, and couples the quantities through a sparse
//! joint model of zonal sums over the daylight lags. Generation samples the
//! joint aggregates first and then each quantity conditioned on them.

mod bands;
mod catalog;
mod dataset;
mod fit;
mod generate;

pub use bands::{band_statistics, BandStatistics, DEFAULT_TRIM, MAPE_FLOOR_MW};
pub use catalog::{Asset, AssetCatalog, Quantity};
pub use dataset::{Access, Dataset};
pub use fit::{
    detect_diurnal_range, fit_system, FittedSystem, JointModel, JointVariable, LoadModel, SolarModel,
    WindModel, DAYLIGHT_MIN_FRACTION,
};
pub use generate::{
    generate_scenarios, generate_scenarios_traced, GenerationTrace, ScenarioBundle, ScenarioSet,
    TargetForecasts,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::IngestError;
use crate::marginals::{MarginalConfig, MarginalError, DEFAULT_NUM_BINS, DEFAULT_MIN_BIN_COUNT};
use crate::precision::{PrecisionError, DEFAULT_EDGE_THRESHOLD, DEFAULT_LAMBDA_GRID, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::sampler::{PsdRepair, SamplerError};
use crate::solarpca::{PcaError, DEFAULT_PCA_THRESHOLD};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("catalog: {0}")]
    Catalog(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{quantity} unit {unit} lag {lag}: {source}")]
    Marginal {
        quantity: Quantity,
        unit: String,
        lag: usize,
        source: MarginalError,
    },
    #[error("{context}: {source}")]
    Precision {
        context: String,
        source: PrecisionError,
    },
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("solar actuals are zero at every lag")]
    NoDaylight,
    #[error("{0}")]
    Data(String),
}

impl EngineError {
    fn precision(context: impl Into<String>, source: PrecisionError) -> Self {
        EngineError::Precision {
            context: context.into(),
            source,
        }
    }
}

/// Everything that shapes a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub tail_fraction: f64,
    pub tail_span: f64,
    pub bins: usize,
    pub min_bin_count: usize,
    pub pca_threshold: f64,
    pub lambda_grid: Vec<f64>,
    /// Scale of the distance-proportional wind penalty; 0 uses a flat one.
    pub distance_base: f64,
    pub ebic_gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub edge_threshold: f64,
    /// Replace the load marginals with moment-matched normals.
    pub force_empirical: bool,
    /// Clip eigenvalues of covariances that fail Cholesky instead of failing.
    pub psd_clip: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            tail_fraction: crate::marginals::DEFAULT_TAIL_FRACTION,
            tail_span: crate::marginals::DEFAULT_TAIL_SPAN,
            bins: DEFAULT_NUM_BINS,
            min_bin_count: DEFAULT_MIN_BIN_COUNT,
            pca_threshold: DEFAULT_PCA_THRESHOLD,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            distance_base: 1.0,
            ebic_gamma: crate::precision::DEFAULT_EBIC_GAMMA,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
            force_empirical: false,
            psd_clip: true,
        }
    }
}

impl EngineConfig {
    pub fn marginal_config(&self) -> MarginalConfig {
        MarginalConfig {
            tail_fraction: self.tail_fraction,
            tail_span: self.tail_span,
        }
    }

    pub fn psd_repair(&self) -> PsdRepair {
        if self.psd_clip {
            PsdRepair::Clip
        } else {
            PsdRepair::Strict
        }
    }
}

/// `h00` … `h23`.
pub fn lag_labels() -> Vec<String> {
    (0..crate::NUM_LAGS).map(|l| format!("h{l:02}")).collect()
}
