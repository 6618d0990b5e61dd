//! Separable (Kronecker) precision estimation for matrix-variate data.
//!
//! For day matrices `X_d` (rows = units, columns = lags) the row Gram
//! matrix averages `X_d X_dᵀ` over days and lags, the column Gram matrix
//! averages `X_dᵀ X_d` over days and units. Each is scaled to a correlation
//! matrix and given its own graphical lasso. The joint covariance is then
//! `Σ_rows ⊗ Σ_cols`, with the scale of both factors fixed by unit diagonals.

use serde::{Deserialize, Serialize};

use super::penalty::{select_penalty, support_refit, PenaltySpec};
use super::{PrecisionError, PrecisionEstimate, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::linalg::{kron, to_correlation, Matrix};

#[derive(Debug, Clone)]
pub struct GeminiOptions {
    pub row_penalty: PenaltySpec,
    pub col_penalty: PenaltySpec,
    pub tol: f64,
    pub max_iter: usize,
    /// Re-estimate each factor without penalty on its selected support.
    pub refit_support: bool,
}

impl Default for GeminiOptions {
    fn default() -> Self {
        Self {
            row_penalty: PenaltySpec::default(),
            col_penalty: PenaltySpec::default(),
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            refit_support: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableGaussianModel {
    /// Factor over rows (units / assets).
    pub spatial: PrecisionEstimate,
    /// Factor over columns (lags or PCA components).
    pub temporal: PrecisionEstimate,
    pub spatial_lambda: f64,
    pub temporal_lambda: f64,
    pub unit_order: Vec<String>,
    pub lag_order: Vec<String>,
}

impl SeparableGaussianModel {
    pub fn num_rows(&self) -> usize {
        self.spatial.dim()
    }

    pub fn num_cols(&self) -> usize {
        self.temporal.dim()
    }

    pub fn spatial_cov(&self) -> &Matrix {
        &self.spatial.sigma
    }

    pub fn temporal_cov(&self) -> &Matrix {
        &self.temporal.sigma
    }

    /// `Σ_S ⊗ Σ_T`, indexed `unit · q + lag`.
    pub fn joint_covariance(&self) -> Matrix {
        kron(&self.spatial.sigma, &self.temporal.sigma)
    }

    pub fn with_labels(mut self, units: Vec<String>, lags: Vec<String>) -> Self {
        assert_eq!(units.len(), self.num_rows());
        assert_eq!(lags.len(), self.num_cols());
        self.unit_order = units;
        self.lag_order = lags;
        self
    }
}

/// Row and column Gram matrices of mean-removed day matrices, as
/// correlation matrices. Rows or columns that never vary become identity
/// rows.
pub fn gram_correlations(days: &[Matrix]) -> Result<(Matrix, Matrix), PrecisionError> {
    let n = days.len();
    if n < 2 {
        return Err(PrecisionError::TooFewSamples { have: n, need: 2 });
    }
    let (p, q) = days[0].shape();
    if days.iter().any(|d| d.shape() != (p, q)) {
        return Err(PrecisionError::DimensionMismatch("day matrices differ in shape".into()));
    }
    let mut mean = Matrix::zeros(p, q);
    for d in days {
        mean += d;
    }
    mean /= n as f64;
    let mut rows = Matrix::zeros(p, p);
    let mut cols = Matrix::zeros(q, q);
    for d in days {
        let c = d - &mean;
        rows += &c * c.transpose();
        cols += c.transpose() * &c;
    }
    rows /= (n * q) as f64;
    cols /= (n * p) as f64;
    let flat_rows = (0..p).filter(|&i| rows[(i, i)] <= 0.0).count();
    let flat_cols = (0..q).filter(|&i| cols[(i, i)] <= 0.0).count();
    if flat_rows + flat_cols > 0 {
        log::warn!("{flat_rows} constant row(s) and {flat_cols} constant column(s) treated as independent");
    }
    Ok((to_correlation(&rows), to_correlation(&cols)))
}

/// Fit a separable Gaussian model to `N` day matrices of Gaussianized data.
pub fn gemini(days: &[Matrix], options: &GeminiOptions) -> Result<SeparableGaussianModel, PrecisionError> {
    let (row_corr, col_corr) = gram_correlations(days)?;
    let n = days.len();
    let (p, q) = days[0].shape();
    let rows = select_penalty(&row_corr, n * q, &options.row_penalty, options.tol, options.max_iter)?;
    let cols = select_penalty(&col_corr, n * p, &options.col_penalty, options.tol, options.max_iter)?;
    // The penalty picks the graph; shrinkage on the kept entries is undone by
    // the refit, which keeps the exact zeros.
    let finish = |s: &Matrix, est: PrecisionEstimate| {
        let refit = options.refit_support.then(|| support_refit(s, &est, options.tol, options.max_iter));
        refit.flatten().unwrap_or(est).normalized()
    };
    Ok(SeparableGaussianModel {
        spatial: finish(&row_corr, rows.estimate),
        temporal: finish(&col_corr, cols.estimate),
        spatial_lambda: rows.lambda,
        temporal_lambda: cols.lambda,
        unit_order: (0..p).map(|i| i.to_string()).collect(),
        lag_order: (0..q).map(|i| i.to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky_lower;
    use crate::precision::{glasso, sample_correlation, PenalizedProblem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn kron_days(spatial: &Matrix, temporal: &Matrix, n: usize, seed: u64) -> Vec<Matrix> {
        let ls = cholesky_lower(spatial).unwrap();
        let lt = cholesky_lower(temporal).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let g = Matrix::from_fn(spatial.nrows(), temporal.nrows(), |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                });
                &ls * g * lt.transpose()
            })
            .collect()
    }

    #[test]
    fn iid_noise_gives_identity_factors() {
        let days = kron_days(&Matrix::identity(4, 4), &Matrix::identity(6, 6), 2000, 1);
        let model = gemini(&days, &GeminiOptions::default()).unwrap();
        assert!((model.spatial_cov() - Matrix::identity(4, 4)).amax() <= 0.05);
        assert!((model.temporal_cov() - Matrix::identity(6, 6)).amax() <= 0.05);
    }

    #[test]
    fn single_row_reduces_to_plain_glasso() {
        let ar = Matrix::from_fn(5, 5, |i, j| 0.6f64.powi((i as i32 - j as i32).abs()));
        let days = kron_days(&Matrix::identity(1, 1), &ar, 400, 2);
        let opts = GeminiOptions {
            row_penalty: PenaltySpec::scalar(0.05),
            col_penalty: PenaltySpec::scalar(0.05),
            refit_support: false,
            ..Default::default()
        };
        let model = gemini(&days, &opts).unwrap();
        assert_eq!(model.spatial_cov(), &Matrix::identity(1, 1));
        let stacked = Matrix::from_fn(days.len(), 5, |d, l| days[d][(0, l)]);
        let plain = glasso(&PenalizedProblem::scalar(sample_correlation(&stacked).unwrap(), 0.05)).unwrap();
        assert!((&model.temporal.theta - &plain.theta).amax() < 1e-10);
    }

    #[test]
    fn transposing_days_swaps_factors() {
        let s = Matrix::from_fn(3, 3, |i, j| 0.4f64.powi((i as i32 - j as i32).abs()));
        let t = Matrix::from_fn(5, 5, |i, j| 0.7f64.powi((i as i32 - j as i32).abs()));
        let days = kron_days(&s, &t, 300, 3);
        let flipped: Vec<Matrix> = days.iter().map(|d| d.transpose()).collect();
        let opts = GeminiOptions::default();
        let a = gemini(&days, &opts).unwrap();
        let b = gemini(&flipped, &opts).unwrap();
        assert!((&a.spatial.theta - &b.temporal.theta).amax() < 1e-12);
        assert!((&a.temporal.theta - &b.spatial.theta).amax() < 1e-12);
    }

    fn chain_correlation(n: usize, off: f64) -> Matrix {
        let theta = Matrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 1.0,
            1 => off,
            _ => 0.0,
        });
        to_correlation(&theta.try_inverse().unwrap())
    }

    #[test]
    fn recovers_sparse_kronecker_factors() {
        let s = chain_correlation(4, -0.4);
        let t = chain_correlation(6, -0.35);
        let days = kron_days(&s, &t, 2000, 4);
        let model = gemini(&days, &GeminiOptions::default()).unwrap();
        assert!((model.spatial_cov() - &s).amax() <= 0.1);
        assert!((model.temporal_cov() - &t).amax() <= 0.1);
        let truth = kron(&s, &t);
        let rel = (model.joint_covariance() - &truth).norm() / truth.norm();
        assert!(rel <= 0.15, "relative Frobenius error {rel}");
        for (est, p) in [(&model.spatial, 4), (&model.temporal, 6)] {
            for i in 0..p {
                for j in 0..p {
                    assert_eq!(est.theta[(i, j)] != 0.0, i.abs_diff(j) <= 1, "({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn needs_two_days() {
        let one = vec![Matrix::zeros(2, 3)];
        assert!(gemini(&one, &GeminiOptions::default()).is_err());
    }
}
