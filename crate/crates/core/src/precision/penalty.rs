//! Penalty matrices and regularization selection.

use std::collections::BTreeMap;

use super::{glasso, PenalizedProblem, PrecisionError, PrecisionEstimate};
use crate::linalg::{log_det_spd, Matrix};

pub const DEFAULT_LAMBDA_GRID: [f64; 4] = [0.01, 0.05, 0.1, 0.2];
pub const DEFAULT_EBIC_GAMMA: f64 = 0.5;
/// Penalty that pins an entry to zero in a support-restricted refit.
const EXCLUDED: f64 = 1e6;

/// `Λᵢⱼ = base · dist(i, j) / mean pairwise distance`, zero diagonal.
///
/// The mean is over distinct pairs, so rescaling every coordinate leaves
/// the matrix unchanged. Coincident units get no penalty between them.
pub fn distance_penalty(
    units: &[String],
    locations: &BTreeMap<String, (f64, f64)>,
    base: f64,
) -> Result<Matrix, PrecisionError> {
    let coords = units
        .iter()
        .map(|u| {
            locations
                .get(u)
                .copied()
                .ok_or_else(|| PrecisionError::MissingCoordinates(u.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let p = coords.len();
    let dist = Matrix::from_fn(p, p, |i, j| {
        let (dx, dy) = (coords[i].0 - coords[j].0, coords[i].1 - coords[j].1);
        dx.hypot(dy)
    });
    let pairs = p * p.saturating_sub(1);
    let mean = if pairs == 0 { 0.0 } else { dist.sum() / pairs as f64 };
    if mean == 0.0 {
        return Ok(Matrix::zeros(p, p));
    }
    Ok(dist * (base / mean))
}

/// How to build the penalty for one solve: `λ · shape` for each candidate
/// `λ`, where `shape` defaults to ones off the diagonal.
#[derive(Debug, Clone)]
pub struct PenaltySpec {
    pub grid: Vec<f64>,
    pub shape: Option<Matrix>,
    pub gamma: f64,
}

impl PenaltySpec {
    pub fn scalar(lambda: f64) -> Self {
        Self::grid(&[lambda])
    }

    pub fn grid(values: &[f64]) -> Self {
        Self {
            grid: values.to_vec(),
            shape: None,
            gamma: DEFAULT_EBIC_GAMMA,
        }
    }

    pub fn shaped(values: &[f64], shape: Matrix) -> Self {
        Self {
            grid: values.to_vec(),
            shape: Some(shape),
            gamma: DEFAULT_EBIC_GAMMA,
        }
    }

    pub fn matrix_for(&self, value: f64, p: usize) -> Matrix {
        match &self.shape {
            Some(shape) => shape * value,
            None => Matrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { value }),
        }
    }
}

impl Default for PenaltySpec {
    fn default() -> Self {
        Self::grid(&DEFAULT_LAMBDA_GRID)
    }
}

/// Extended BIC of an estimate fitted on `n` observations:
/// `−n (log det Θ − tr(SΘ)) + |E| ln n + 4γ |E| ln p`.
pub fn ebic(estimate: &PrecisionEstimate, s: &Matrix, n: usize, gamma: f64) -> f64 {
    let p = s.nrows() as f64;
    let loglik = log_det_spd(&estimate.theta).unwrap_or(f64::NEG_INFINITY)
        - s.component_mul(&estimate.theta).sum();
    let edges = estimate.edge_count() as f64;
    -(n as f64) * loglik + edges * (n as f64).ln() + 4.0 * gamma * edges * p.max(1.0).ln()
}

#[derive(Debug, Clone)]
pub struct SelectedEstimate {
    pub estimate: PrecisionEstimate,
    pub lambda: f64,
    /// `(λ, EBIC)` for every grid value tried.
    pub scores: Vec<(f64, f64)>,
}

/// Maximum likelihood estimate restricted to the nonzero pattern of
/// `estimate`, or `None` when it does not exist (singular `s` with a dense
/// pattern) or does not converge.
pub fn support_refit(s: &Matrix, estimate: &PrecisionEstimate, tol: f64, max_iter: usize) -> Option<PrecisionEstimate> {
    let p = s.nrows();
    let lambda = Matrix::from_fn(p, p, |i, j| {
        if i == j || estimate.theta[(i, j)] != 0.0 {
            0.0
        } else {
            EXCLUDED
        }
    });
    let mut problem = PenalizedProblem::new(s.clone(), lambda);
    problem.tol = tol;
    problem.max_iter = max_iter;
    glasso(&problem).ok().filter(|e| e.converged && !e.jitter_added)
}

/// Run glasso for every candidate `λ` and keep the EBIC minimizer (the
/// first one on ties). Each candidate is scored by the likelihood of the
/// unpenalized refit on its support, so shrinkage bias does not push the
/// choice towards the smallest `λ`; the penalized estimate is scored when
/// the refit is unavailable.
pub fn select_penalty(
    s: &Matrix,
    n_obs: usize,
    spec: &PenaltySpec,
    tol: f64,
    max_iter: usize,
) -> Result<SelectedEstimate, PrecisionError> {
    if spec.grid.is_empty() {
        return Err(PrecisionError::EmptyGrid);
    }
    let p = s.nrows();
    let mut best: Option<(f64, f64, PrecisionEstimate)> = None;
    let mut scores = Vec::with_capacity(spec.grid.len());
    for &value in &spec.grid {
        let mut problem = PenalizedProblem::new(s.clone(), spec.matrix_for(value, p));
        problem.tol = tol;
        problem.max_iter = max_iter;
        let est = glasso(&problem)?;
        let scored = support_refit(s, &est, tol, max_iter);
        let score = ebic(scored.as_ref().unwrap_or(&est), s, n_obs, spec.gamma);
        scores.push((value, score));
        if best.as_ref().is_none_or(|(_, b, _)| score < *b) {
            best = Some((value, score, est));
        }
    }
    let (lambda, _, estimate) = best.expect("non-empty grid");
    Ok(SelectedEstimate {
        estimate,
        lambda,
        scores,
    })
}
