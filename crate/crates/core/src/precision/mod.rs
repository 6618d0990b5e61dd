//! Sparse precision estimation: graphical lasso with an elementwise penalty,
//! the separable (Kronecker) variant over row and column factors, and
//! conditional-dependence graphs.

mod gemini;
mod glasso;
mod graph;
mod penalty;

pub use gemini::{gemini, GeminiOptions, SeparableGaussianModel};
pub use glasso::{glasso, penalized_objective, SINGULAR_JITTER};
pub use graph::{dependency_graph, DependencyGraph, Edge, DEFAULT_EDGE_THRESHOLD};
pub use penalty::{
    distance_penalty, ebic, select_penalty, support_refit, PenaltySpec, SelectedEstimate, DEFAULT_EBIC_GAMMA,
    DEFAULT_LAMBDA_GRID,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{matrix_serde, Matrix};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecisionError {
    #[error("column {column} has zero variance")]
    ZeroVariance { column: usize },
    #[error("need at least {need} observations, have {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("{0} is not symmetric")]
    NotSymmetric(&'static str),
    #[error("penalty entries must be finite and nonnegative")]
    NegativePenalty,
    #[error("input is not positive semidefinite (smallest eigenvalue {0:e})")]
    NonPsdInput(f64),
    #[error("singular input needs a strictly positive off-diagonal penalty")]
    SingularWithoutPenalty,
    #[error("estimate is not positive definite")]
    NotPositiveDefinite,
    #[error("did not converge in {0} sweeps")]
    NotConverged(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no coordinates for unit {0}")]
    MissingCoordinates(String),
    #[error("empty penalty grid")]
    EmptyGrid,
}

/// Inputs of one graphical lasso solve.
#[derive(Debug, Clone)]
pub struct PenalizedProblem {
    /// Sample correlation matrix.
    pub s: Matrix,
    /// Elementwise penalty; the diagonal is normally zero.
    pub lambda: Matrix,
    pub tol: f64,
    pub max_iter: usize,
}

impl PenalizedProblem {
    pub fn new(s: Matrix, lambda: Matrix) -> Self {
        Self {
            s,
            lambda,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    /// Scalar `λ` on every off-diagonal entry, none on the diagonal.
    pub fn scalar(s: Matrix, lambda: f64) -> Self {
        let p = s.nrows();
        let l = Matrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { lambda });
        Self::new(s, l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionEstimate {
    #[serde(with = "matrix_serde")]
    pub theta: Matrix,
    #[serde(with = "matrix_serde")]
    pub sigma: Matrix,
    /// Penalized log-likelihood after each sweep.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub jitter_added: bool,
}

impl PrecisionEstimate {
    pub fn dim(&self) -> usize {
        self.theta.nrows()
    }

    pub fn require_converged(self) -> Result<Self, PrecisionError> {
        if self.converged {
            Ok(self)
        } else {
            Err(PrecisionError::NotConverged(self.iterations))
        }
    }

    /// Partial correlation `−Θᵢⱼ / √(Θᵢᵢ Θⱼⱼ)`.
    pub fn partial_correlation(&self, i: usize, j: usize) -> f64 {
        -self.theta[(i, j)] / (self.theta[(i, i)] * self.theta[(j, j)]).sqrt()
    }

    /// Number of nonzero off-diagonal pairs `i < j`.
    pub fn edge_count(&self) -> usize {
        let p = self.dim();
        (0..p)
            .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
            .filter(|&(i, j)| self.theta[(i, j)] != 0.0)
            .count()
    }

    /// Rescale so `sigma` has unit diagonal, adjusting `theta` to match.
    pub fn normalized(mut self) -> Self {
        let p = self.dim();
        let d: Vec<f64> = (0..p).map(|i| self.sigma[(i, i)].sqrt()).collect();
        if d.iter().all(|v| (*v - 1.0).abs() < 1e-15) {
            return self;
        }
        for i in 0..p {
            for j in 0..p {
                self.sigma[(i, j)] /= d[i] * d[j];
                self.theta[(i, j)] *= d[i] * d[j];
            }
        }
        self
    }
}

/// Sample correlation of the columns of an `N × p` data matrix: columns are
/// standardized to mean 0 and variance 1, then `S = XᵀX / N`.
pub fn sample_correlation(x: &Matrix) -> Result<Matrix, PrecisionError> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(PrecisionError::TooFewSamples { have: n, need: 2 });
    }
    let mut z = x.clone();
    for j in 0..p {
        let col: Vec<f64> = x.column(j).iter().cloned().collect();
        let mean = crate::stats::mean(&col);
        let sd = crate::stats::variance(&col).sqrt();
        if !(sd > 0.0) || sd <= 1e-14 * mean.abs() {
            return Err(PrecisionError::ZeroVariance { column: j });
        }
        for i in 0..n {
            z[(i, j)] = (x[(i, j)] - mean) / sd;
        }
    }
    let mut s = z.transpose() * &z / n as f64;
    for i in 0..p {
        s[(i, i)] = 1.0;
    }
    Ok(crate::linalg::symmetrize(&s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{spd_inverse, Vector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn random_correlation(p: usize, rng: &mut ChaCha20Rng) -> Matrix {
        let n = 3 * p + 5;
        let x = Matrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        sample_correlation(&x).unwrap()
    }

    #[test]
    fn identical_columns_correlate_perfectly() {
        let x = Matrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, -3.0, -3.0, 0.5, 0.5]);
        let s = sample_correlation(&x).unwrap();
        assert!((s[(0, 1)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn independent_columns_are_nearly_uncorrelated() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x = Matrix::from_fn(10_000, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = sample_correlation(&x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(s[(i, j)].abs() < 0.05);
                }
            }
        }
    }

    #[test]
    fn scalar_and_error_cases() {
        let x = Matrix::from_column_slice(3, 1, &[1.0, 2.0, 4.0]);
        assert_eq!(sample_correlation(&x).unwrap(), Matrix::identity(1, 1));
        let flat = Matrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        assert_eq!(
            sample_correlation(&flat),
            Err(PrecisionError::ZeroVariance { column: 1 })
        );
        assert!(sample_correlation(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn unpenalized_solution_is_the_inverse() {
        let s = Matrix::from_row_slice(3, 3, &[1.0, 0.4, 0.2, 0.4, 1.0, -0.3, 0.2, -0.3, 1.0]);
        let est = glasso(&PenalizedProblem::scalar(s.clone(), 0.0)).unwrap();
        let inv = spd_inverse(&s).unwrap();
        assert!((&est.theta - inv).amax() < 1e-8);
        assert!(est.converged);
    }

    #[test]
    fn full_shrinkage_gives_diagonal() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let s = random_correlation(5, &mut rng);
        let max_off = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| s[(i, j)].abs())
            .fold(0.0, f64::max);
        let est = glasso(&PenalizedProblem::scalar(s.clone(), max_off)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    assert!((est.theta[(i, i)] - 1.0 / s[(i, i)]).abs() < 1e-10);
                } else {
                    assert_eq!(est.theta[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn singular_input_needs_penalty() {
        // Rank-one correlation.
        let v = Vector::from_vec(vec![1.0, 1.0, 1.0]);
        let s = &v * v.transpose();
        let partial = Matrix::from_row_slice(3, 3, &[0.0, 0.1, 0.0, 0.1, 0.0, 0.1, 0.0, 0.1, 0.0]);
        assert_eq!(
            glasso(&PenalizedProblem::new(s.clone(), partial)).unwrap_err(),
            PrecisionError::SingularWithoutPenalty
        );
        let ok = glasso(&PenalizedProblem::scalar(s.clone(), 0.2)).unwrap();
        assert!(crate::linalg::is_positive_definite(&ok.theta));
        let jittered = glasso(&PenalizedProblem::scalar(
            Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            0.0,
        ))
        .unwrap();
        assert!(jittered.jitter_added);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            glasso(&PenalizedProblem::scalar(s, 0.0)),
            Err(PrecisionError::NonPsdInput(_))
        ));
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(glasso(&PenalizedProblem::scalar(asym, 0.0)).is_err());
        let neg = PenalizedProblem::scalar(Matrix::identity(2, 2), -0.1);
        assert_eq!(glasso(&neg).unwrap_err(), PrecisionError::NegativePenalty);
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut problem = PenalizedProblem::scalar(random_correlation(6, &mut rng), 0.05);
        problem.max_iter = 1;
        problem.tol = 1e-300;
        let est = glasso(&problem).unwrap();
        assert!(!est.converged);
        assert_eq!(est.require_converged(), Err(PrecisionError::NotConverged(1)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn kkt_pd_and_monotone_objective(seed in 0u64..100_000, p in 2usize..9, lambda in 0.0f64..0.3) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let s = random_correlation(p, &mut rng);
            let problem = PenalizedProblem::scalar(s.clone(), lambda);
            let est = glasso(&problem).unwrap();
            prop_assert!(est.converged);
            prop_assert!(crate::linalg::is_positive_definite(&est.theta));
            let resid = &est.sigma * &est.theta - Matrix::identity(p, p);
            prop_assert!(crate::linalg::spectral_norm(&resid) <= 1e-6);
            for i in 0..p {
                prop_assert!((est.sigma[(i, i)] - s[(i, i)]).abs() <= 1e-9);
                for j in 0..p {
                    if i == j { continue; }
                    let g = est.sigma[(i, j)] - s[(i, j)];
                    prop_assert!(g.abs() <= lambda + 1e-6);
                    if est.theta[(i, j)] != 0.0 {
                        prop_assert!((g - lambda * est.theta[(i, j)].signum()).abs() <= 1e-6);
                    }
                }
            }
            for w in est.objective_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "trace {:?}", est.objective_trace);
            }
        }
    }
}
