//! Principal components of 24-hour solar deviation curves.
//!
//! Gaussianized curves from every asset and day are pooled, centered per
//! hour, and decomposed. Night hours carry no variance, so they drop out of
//! every retained loading and reconstruct to the center (zero) exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{matrix_serde, sorted_eigen, Matrix, Vector};
use crate::precision::{gemini, GeminiOptions, PrecisionError, SeparableGaussianModel};
use crate::NUM_LAGS;

pub const DEFAULT_PCA_THRESHOLD: f64 = 0.95;
/// Eigenvalues below this count as zero for rank reporting.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcaError {
    #[error("need at least {need} pooled curves, have {have}")]
    TooFewRows { have: usize, need: usize },
    #[error("curves have {0} columns, expected {NUM_LAGS}")]
    WrongWidth(usize),
    #[error("threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error(transparent)]
    Precision(#[from] PrecisionError),
}

/// Orthonormal loading basis with per-component standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    /// Per-hour mean of the pool.
    pub center: Vec<f64>,
    /// Columns are loadings, by decreasing explained variance.
    #[serde(with = "matrix_serde")]
    pub loadings: Matrix,
    pub explained: Vec<f64>,
    pub k: usize,
    pub component_mean: Vec<f64>,
    pub component_std: Vec<f64>,
}

/// Loadings and explained variances of a pooled `rows × 24` matrix.
///
/// Each loading is signed so its largest-magnitude entry is positive (the
/// first such entry on ties).
pub fn fit_pca(pool: &Matrix) -> Result<(Vec<f64>, Matrix, Vec<f64>), PcaError> {
    let (n, q) = pool.shape();
    if q != NUM_LAGS {
        return Err(PcaError::WrongWidth(q));
    }
    if n < NUM_LAGS {
        return Err(PcaError::TooFewRows { have: n, need: NUM_LAGS });
    }
    let center: Vec<f64> = (0..q).map(|j| pool.column(j).mean()).collect();
    let mut centered = pool.clone();
    for j in 0..q {
        centered.column_mut(j).add_scalar_mut(-center[j]);
    }
    let cov = centered.transpose() * &centered / n as f64;
    let (values, mut vectors) = sorted_eigen(&cov);
    for j in 0..q {
        let mut best = 0;
        for i in 1..q {
            if vectors[(i, j)].abs() > vectors[(best, j)].abs() {
                best = i;
            }
        }
        if vectors[(best, j)] < 0.0 {
            vectors.column_mut(j).neg_mut();
        }
    }
    let explained: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let rank = explained.iter().filter(|v| **v >= RANK_TOL).count();
    if rank < q {
        log::info!("pooled solar covariance has rank {rank} of {q}");
    }
    Ok((center, vectors, explained))
}

/// Smallest `k` whose leading components explain at least `threshold` of
/// the total variance.
pub fn choose_k(explained: &[f64], threshold: f64) -> usize {
    let total: f64 = explained.iter().sum();
    if explained.is_empty() {
        return 0;
    }
    if total <= 0.0 {
        return 1;
    }
    let target = threshold * total;
    let mut cum = 0.0;
    for (i, v) in explained.iter().enumerate() {
        cum += v;
        // Relative slack absorbs rounding in the running sum.
        if cum >= target - 1e-12 * total {
            return i + 1;
        }
    }
    explained.len()
}

impl PcaBasis {
    /// Fit on a pool of curves, keeping `k` from [`choose_k`] (or `fixed_k`).
    pub fn fit(pool: &Matrix, threshold: f64, fixed_k: Option<usize>) -> Result<Self, PcaError> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(PcaError::BadThreshold(threshold));
        }
        let (center, loadings, explained) = fit_pca(pool)?;
        let k = fixed_k
            .unwrap_or_else(|| choose_k(&explained, threshold))
            .clamp(1, NUM_LAGS);
        let mut basis = Self {
            center,
            loadings,
            explained,
            k,
            component_mean: vec![0.0; k],
            component_std: vec![1.0; k],
        };
        let raw = basis.raw_scores(pool);
        let n = pool.nrows() as f64;
        for j in 0..k {
            let col = raw.column(j);
            let mean = col.mean();
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            basis.component_mean[j] = mean;
            basis.component_std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(basis)
    }

    /// First `k` loadings as a `24 × k` matrix.
    pub fn retained(&self) -> Matrix {
        self.loadings.columns(0, self.k).into_owned()
    }

    /// Centered curves times the retained loadings, before standardizing.
    pub fn raw_scores(&self, curves: &Matrix) -> Matrix {
        let mut centered = curves.clone();
        for j in 0..NUM_LAGS {
            centered.column_mut(j).add_scalar_mut(-self.center[j]);
        }
        centered * self.retained()
    }

    /// Standardized component scores, `m × k`.
    pub fn project(&self, curves: &Matrix) -> Matrix {
        let mut s = self.raw_scores(curves);
        for j in 0..self.k {
            let (mu, sd) = (self.component_mean[j], self.component_std[j]);
            s.column_mut(j).apply(|x| *x = (*x - mu) / sd);
        }
        s
    }

    /// Curves from standardized scores, `m × 24`.
    pub fn reconstruct(&self, scores: &Matrix) -> Matrix {
        let mut raw = scores.clone();
        for j in 0..self.k {
            let (mu, sd) = (self.component_mean[j], self.component_std[j]);
            raw.column_mut(j).apply(|x| *x = *x * sd + mu);
        }
        let mut curves = raw * self.retained().transpose();
        for j in 0..NUM_LAGS {
            curves.column_mut(j).add_scalar_mut(self.center[j]);
        }
        curves
    }

    /// `w ∘ σ` with `wⱼ = Σ_{l∈lags} L[l, j]`: the sum of a reconstructed
    /// curve over `lags` is `Σ_{l∈lags} center_l + w·μ + (w ∘ σ)·s`.
    pub fn lag_sum_weights(&self, lags: std::ops::RangeInclusive<usize>) -> (Vector, f64) {
        let r = self.retained();
        let mut offset: f64 = lags.clone().map(|l| self.center[l]).sum();
        let weights = Vector::from_fn(self.k, |j, _| {
            let w: f64 = lags.clone().map(|l| r[(l, j)]).sum();
            w * self.component_std[j]
        });
        for j in 0..self.k {
            let w: f64 = lags.clone().map(|l| r[(l, j)]).sum();
            offset += w * self.component_mean[j];
        }
        (weights, offset)
    }
}

/// PCA basis plus a separable Gaussian model over (asset × component).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolarPcaModel {
    pub basis: PcaBasis,
    pub separable: SeparableGaussianModel,
}

/// Fit from per-day `assets × 24` Gaussianized matrices.
pub fn fit_solar_model(
    days: &[Matrix],
    assets: &[String],
    threshold: f64,
    options: &GeminiOptions,
) -> Result<SolarPcaModel, PcaError> {
    let p = assets.len();
    let mut pool = Matrix::zeros(days.len() * p, NUM_LAGS);
    for (d, m) in days.iter().enumerate() {
        pool.rows_mut(d * p, p).copy_from(m);
    }
    let basis = PcaBasis::fit(&pool, threshold, None)?;
    let scores = basis.project(&pool);
    let score_days: Vec<Matrix> = (0..days.len())
        .map(|d| scores.rows(d * p, p).into_owned())
        .collect();
    let lags = (0..basis.k).map(|j| format!("pc{j}")).collect();
    let separable = gemini(&score_days, options)?.with_labels(assets.to_vec(), lags);
    Ok(SolarPcaModel { basis, separable })
}
