//! Graphical lasso by block coordinate descent.
//!
//! Maximizes `log det Θ − tr(SΘ) − Σᵢⱼ Λᵢⱼ|Θᵢⱼ|` over positive definite `Θ`.
//! The working covariance `W` starts at `S + diag(Λ)`; each column update
//! solves a lasso regression of that column on the others, warm-started
//! from the previous sweep.

use super::{PenalizedProblem, PrecisionError, PrecisionEstimate};
use crate::linalg::{cholesky_lower, log_det_spd, sorted_eigen, symmetrize, Matrix, Vector};

const INNER_TOL: f64 = 1e-13;
const INNER_MAX_ITER: usize = 20_000;
/// Diagonal jitter for a singular `S` with an all-zero penalty.
pub const SINGULAR_JITTER: f64 = 1e-10;

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `log det Θ − tr(SΘ) − Σᵢⱼ Λᵢⱼ|Θᵢⱼ|`, or `-inf` if `Θ` is not PD.
pub fn penalized_objective(theta: &Matrix, s: &Matrix, lambda: &Matrix) -> f64 {
    let Some(logdet) = log_det_spd(theta) else {
        return f64::NEG_INFINITY;
    };
    let trace: f64 = s.component_mul(theta).sum();
    let penalty: f64 = lambda.component_mul(&theta.abs()).sum();
    logdet - trace - penalty
}

/// Solve `min ½βᵀVβ − uᵀβ + Σ λₖ|βₖ|` by cyclic coordinate descent,
/// starting from `beta`.
fn lasso_cd(v: &Matrix, u: &Vector, lambda: &Vector, beta: &mut Vector) {
    let m = u.len();
    if lambda.iter().all(|l| *l == 0.0) {
        if let Some(ch) = nalgebra::Cholesky::new(v.clone()) {
            *beta = ch.solve(u);
            return;
        }
    }
    let mut grad = v * &*beta;
    let scale = u.amax().max(1e-300);
    for _ in 0..INNER_MAX_ITER {
        let mut max_delta = 0.0_f64;
        for k in 0..m {
            let vkk = v[(k, k)];
            let old = beta[k];
            let r = u[k] - (grad[k] - vkk * old);
            let new = soft_threshold(r, lambda[k]) / vkk;
            let delta = new - old;
            if delta != 0.0 {
                beta[k] = new;
                for i in 0..m {
                    grad[i] += v[(i, k)] * delta;
                }
                max_delta = max_delta.max(delta.abs() * vkk);
            }
        }
        if max_delta <= INNER_TOL * scale {
            break;
        }
    }
}

fn others(p: usize, j: usize) -> Vec<usize> {
    (0..p).filter(|&i| i != j).collect()
}

/// Assemble `Θ` from the regression coefficients and `W`, symmetrized.
fn assemble_theta(w: &Matrix, betas: &Matrix) -> Matrix {
    let p = w.nrows();
    let mut theta = Matrix::zeros(p, p);
    for j in 0..p {
        let idx = others(p, j);
        let mut dot = 0.0;
        for &i in &idx {
            dot += w[(i, j)] * betas[(i, j)];
        }
        let tjj = 1.0 / (w[(j, j)] - dot);
        theta[(j, j)] = tjj;
        for &i in &idx {
            theta[(i, j)] = -betas[(i, j)] * tjj;
        }
    }
    symmetrize(&theta)
}

fn validate(problem: &PenalizedProblem) -> Result<(), PrecisionError> {
    let s = &problem.s;
    let l = &problem.lambda;
    let p = s.nrows();
    if s.ncols() != p || l.nrows() != p || l.ncols() != p {
        return Err(PrecisionError::DimensionMismatch(format!(
            "S is {}x{}, Lambda is {}x{}",
            s.nrows(),
            s.ncols(),
            l.nrows(),
            l.ncols()
        )));
    }
    let scale = s.amax().max(1.0);
    if crate::linalg::max_asymmetry(s) > 1e-12 * scale {
        return Err(PrecisionError::NotSymmetric("S"));
    }
    if crate::linalg::max_asymmetry(l) > 1e-12 * l.amax().max(1.0) {
        return Err(PrecisionError::NotSymmetric("Lambda"));
    }
    if l.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(PrecisionError::NegativePenalty);
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(PrecisionError::NonPsdInput(f64::NAN));
    }
    Ok(())
}

/// Graphical lasso. Non-convergence after `max_iter` sweeps returns the last
/// iterate with `converged = false`.
pub fn glasso(problem: &PenalizedProblem) -> Result<PrecisionEstimate, PrecisionError> {
    validate(problem)?;
    let p = problem.s.nrows();
    let mut s = symmetrize(&problem.s);
    let lambda = symmetrize(&problem.lambda);

    let (eigvals, _) = sorted_eigen(&s);
    let min_eig = if p > 0 { eigvals[p - 1] } else { 0.0 };
    let scale = s.diagonal().amax().max(1e-300);
    if min_eig < -1e-8 * scale {
        return Err(PrecisionError::NonPsdInput(min_eig));
    }
    let mut jitter_added = false;
    let singular = min_eig <= 1e-12 * scale;
    let diag_penalized = (0..p).all(|i| lambda[(i, i)] > 0.0);
    if singular && !diag_penalized {
        let off_positive = (0..p).all(|i| (0..p).all(|j| i == j || lambda[(i, j)] > 0.0));
        if lambda.iter().all(|v| *v == 0.0) {
            log::warn!("sample correlation is singular; adding {SINGULAR_JITTER:e} to the diagonal");
            for i in 0..p {
                s[(i, i)] += SINGULAR_JITTER;
            }
            jitter_added = true;
        } else if !off_positive {
            return Err(PrecisionError::SingularWithoutPenalty);
        }
    }

    let mut w = s.clone();
    for i in 0..p {
        w[(i, i)] += lambda[(i, i)];
    }
    if p == 1 {
        let theta = Matrix::from_element(1, 1, 1.0 / w[(0, 0)]);
        let objective = penalized_objective(&theta, &s, &lambda);
        return Ok(PrecisionEstimate {
            theta,
            sigma: w,
            objective_trace: vec![objective],
            converged: true,
            iterations: 0,
            jitter_added,
        });
    }

    let off_mean = {
        let mut total = 0.0;
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    total += s[(i, j)].abs();
                }
            }
        }
        total / (p * (p - 1)) as f64
    };
    let threshold = problem.tol * if off_mean > 0.0 { off_mean } else { 1.0 };

    let mut betas = Matrix::zeros(p, p);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for sweep in 0..problem.max_iter {
        iterations = sweep + 1;
        let mut change = 0.0;
        for j in 0..p {
            let idx = others(p, j);
            let m = idx.len();
            let v = Matrix::from_fn(m, m, |a, b| w[(idx[a], idx[b])]);
            let u = Vector::from_fn(m, |a, _| s[(idx[a], j)]);
            let lam = Vector::from_fn(m, |a, _| lambda[(idx[a], j)]);
            let mut beta = Vector::from_fn(m, |a, _| betas[(idx[a], j)]);
            lasso_cd(&v, &u, &lam, &mut beta);
            let w12 = &v * &beta;
            for (a, &i) in idx.iter().enumerate() {
                change += (w12[a] - w[(i, j)]).abs();
                w[(i, j)] = w12[a];
                w[(j, i)] = w12[a];
                betas[(i, j)] = beta[a];
            }
        }
        let theta_k = assemble_theta(&w, &betas);
        trace.push(penalized_objective(&theta_k, &s, &lambda));
        if change / (p * (p - 1)) as f64 <= threshold {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("glasso did not converge in {} sweeps", problem.max_iter);
    }
    let theta = assemble_theta(&w, &betas);
    if cholesky_lower(&theta).is_none() {
        return Err(PrecisionError::NotPositiveDefinite);
    }
    Ok(PrecisionEstimate {
        theta,
        sigma: symmetrize(&w),
        objective_trace: trace,
        converged,
        iterations,
        jitter_added,
    })
}
