//! Multivariate Gaussian sampling, including Kronecker-structured
//! covariances and exact conditioning on linear aggregates.
//!
//! Every draw `i` comes from its own ChaCha20 stream keyed by
//! `(seed, domain)`, so results are reproducible and independent of how
//! draws are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::{cholesky_lower, clipped_sqrt_factor, symmetrize, Matrix, Vector};

/// Eigenvalue floor used by [`PsdRepair::Clip`].
pub const PSD_CLIP_FLOOR: f64 = 1e-10;
/// Relative tolerance below which a constraint row counts as dependent.
pub const DEPENDENT_ROW_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("covariance is not positive definite")]
    NotPsd,
    #[error("constraint covariance A Σ Aᵀ is singular")]
    SingularConstraint,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsdRepair {
    /// Fail with [`SamplerError::NotPsd`].
    #[default]
    Strict,
    /// Clip eigenvalues at [`PSD_CLIP_FLOOR`].
    Clip,
}

/// Independent random streams derived from a seed and a domain label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    key: [u8; 32],
}

impl SeedStream {
    pub fn new(seed: u64, domain: &str) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(domain.as_bytes());
        let mut key = [0u8; 32];
        key.copy_from_slice(&h.finalize());
        Self { key }
    }

    /// Generator for draw `index`.
    pub fn rng(&self, index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}

pub fn standard_normals(rng: &mut ChaCha20Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn standard_normal_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Matrix {
    // Fill row-major so the draw order does not depend on storage order.
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// A square-root factor `F` with `F Fᵀ = Σ`.
pub fn covariance_factor(sigma: &Matrix, repair: PsdRepair) -> Result<Matrix, SamplerError> {
    if sigma.nrows() != sigma.ncols() {
        return Err(SamplerError::DimensionMismatch("covariance must be square".into()));
    }
    if sigma.nrows() == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if let Some(l) = cholesky_lower(sigma) {
        return Ok(l);
    }
    match repair {
        PsdRepair::Strict => Err(SamplerError::NotPsd),
        PsdRepair::Clip => {
            log::warn!("covariance repaired by clipping eigenvalues at {PSD_CLIP_FLOOR:e}");
            Ok(clipped_sqrt_factor(sigma, PSD_CLIP_FLOOR))
        }
    }
}

/// `m` mean-zero draws from `N(0, Σ)`, one per row.
pub fn sample_mvn(sigma: &Matrix, m: usize, seed: u64, repair: PsdRepair) -> Result<Matrix, SamplerError> {
    let factor = covariance_factor(sigma, repair)?;
    let d = sigma.nrows();
    let stream = SeedStream::new(seed, "mvn");
    let rows: Vec<Vector> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.rng(i as u64);
            &factor * standard_normals(&mut rng, d)
        })
        .collect();
    Ok(stack_rows(&rows, d))
}

fn stack_rows(rows: &[Vector], d: usize) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), d);
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from(&r.transpose());
    }
    out
}

/// Row-major flattening of a `p × q` matrix (index `unit · q + lag`).
pub fn flatten_row_major(m: &Matrix) -> Vector {
    let (p, q) = m.shape();
    Vector::from_fn(p * q, |k, _| m[(k / q, k % q)])
}

pub fn unflatten_row_major(v: &Vector, p: usize, q: usize) -> Matrix {
    Matrix::from_fn(p, q, |i, j| v[i * q + j])
}

/// Cholesky factors of `Σ_S` and `Σ_T` for drawing `L_S G L_Tᵀ`.
#[derive(Debug, Clone)]
pub struct KroneckerFactor {
    pub spatial: Matrix,
    pub temporal: Matrix,
}

impl KroneckerFactor {
    pub fn new(spatial: &Matrix, temporal: &Matrix, repair: PsdRepair) -> Result<Self, SamplerError> {
        Ok(Self {
            spatial: covariance_factor(spatial, repair)?,
            temporal: covariance_factor(temporal, repair)?,
        })
    }

    /// One `p × q` draw with covariance `Σ_S ⊗ Σ_T` of its row-major vector.
    pub fn draw(&self, rng: &mut ChaCha20Rng) -> Matrix {
        let g = standard_normal_matrix(rng, self.spatial.nrows(), self.temporal.nrows());
        &self.spatial * g * self.temporal.transpose()
    }
}

/// `m` draws with covariance `Σ_S ⊗ Σ_T`, flattened unit-major.
pub fn sample_kronecker(
    spatial: &Matrix,
    temporal: &Matrix,
    m: usize,
    seed: u64,
    repair: PsdRepair,
) -> Result<Matrix, SamplerError> {
    let factor = KroneckerFactor::new(spatial, temporal, repair)?;
    let d = spatial.nrows() * temporal.nrows();
    let stream = SeedStream::new(seed, "kronecker");
    let rows: Vec<Vector> = (0..m)
        .into_par_iter()
        .map(|i| flatten_row_major(&factor.draw(&mut stream.rng(i as u64))))
        .collect();
    Ok(stack_rows(&rows, d))
}

/// `A x = b`.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub a: Matrix,
    pub b: Vector,
}

/// Greedy pivot-free selection of rows of a PSD Gram matrix `M = AΣAᵀ`
/// that remain independent: row `k` is kept while its Schur complement
/// against the kept rows exceeds `DEPENDENT_ROW_TOL · M_kk` (and a global
/// scale floor).
fn independent_rows(m: &Matrix) -> Vec<usize> {
    let r = m.nrows();
    let scale = (0..r).map(|i| m[(i, i)]).fold(0.0, f64::max);
    let mut kept: Vec<usize> = Vec::new();
    for k in 0..r {
        let mkk = m[(k, k)];
        if mkk <= DEPENDENT_ROW_TOL * scale || mkk <= 0.0 {
            continue;
        }
        let schur = if kept.is_empty() {
            mkk
        } else {
            let sub = Matrix::from_fn(kept.len(), kept.len(), |i, j| m[(kept[i], kept[j])]);
            let col = Vector::from_fn(kept.len(), |i, _| m[(kept[i], k)]);
            match nalgebra::Cholesky::new(sub) {
                Some(ch) => mkk - col.dot(&ch.solve(&col)),
                None => continue,
            }
        };
        if schur > DEPENDENT_ROW_TOL * mkk {
            kept.push(k);
        }
    }
    kept
}

/// Precomputed gain `K = ΣAᵀ(AΣAᵀ)⁻¹` for conditioning `N(0, Σ)` on `A x = b`.
#[derive(Debug, Clone)]
pub struct ConditioningPlan {
    a: Matrix,
    gain: Matrix,
    kept: Vec<usize>,
    dropped: Vec<usize>,
}

impl ConditioningPlan {
    /// With `drop_dependent`, rows that are linearly dependent under `Σ`
    /// are removed (and listed in [`ConditioningPlan::dropped`]); otherwise
    /// they are an error.
    pub fn new(sigma: &Matrix, a: &Matrix, drop_dependent: bool) -> Result<Self, SamplerError> {
        let d = sigma.nrows();
        if a.ncols() != d {
            return Err(SamplerError::DimensionMismatch(format!(
                "A has {} columns, covariance is {d}x{d}",
                a.ncols()
            )));
        }
        let sat = sigma * a.transpose();
        let m = symmetrize(&(a * &sat));
        let kept = independent_rows(&m);
        let dropped: Vec<usize> = (0..a.nrows()).filter(|i| !kept.contains(i)).collect();
        if !dropped.is_empty() {
            if !drop_dependent {
                return Err(SamplerError::SingularConstraint);
            }
            log::warn!("dropping {} dependent constraint row(s)", dropped.len());
        }
        let a_kept = Matrix::from_fn(kept.len(), d, |i, j| a[(kept[i], j)]);
        let sat_kept = Matrix::from_fn(d, kept.len(), |i, j| sat[(i, kept[j])]);
        let m_kept = Matrix::from_fn(kept.len(), kept.len(), |i, j| m[(kept[i], kept[j])]);
        let gain = if kept.is_empty() {
            Matrix::zeros(d, 0)
        } else {
            let ch = nalgebra::Cholesky::new(m_kept).ok_or(SamplerError::SingularConstraint)?;
            // K = ΣAᵀ M⁻¹ = (M⁻¹ AΣ)ᵀ.
            ch.solve(&sat_kept.transpose()).transpose()
        };
        Ok(Self {
            a: a_kept,
            gain,
            kept,
            dropped,
        })
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    fn kept_values(&self, b: &Vector) -> Vector {
        Vector::from_fn(self.kept.len(), |i, _| b[self.kept[i]])
    }

    pub fn conditional_mean(&self, b: &Vector) -> Vector {
        &self.gain * self.kept_values(b)
    }

    /// `Σ − K A Σ`.
    pub fn conditional_cov(&self, sigma: &Matrix) -> Matrix {
        symmetrize(&(sigma - &self.gain * (&self.a * sigma)))
    }

    /// Move an unconditional draw onto the constraint: `x + K(b − Ax)`.
    pub fn adjust(&self, x: &Vector, b: &Vector) -> Vector {
        let resid = self.kept_values(b) - &self.a * x;
        x + &self.gain * resid
    }
}

/// Mean and covariance of `N(0, Σ)` conditioned on `A x = b`.
pub fn condition_on_linear(sigma: &Matrix, constraint: &LinearConstraint) -> Result<(Vector, Matrix), SamplerError> {
    if constraint.b.len() != constraint.a.nrows() {
        return Err(SamplerError::DimensionMismatch("b length differs from A rows".into()));
    }
    let plan = ConditioningPlan::new(sigma, &constraint.a, false)?;
    Ok((plan.conditional_mean(&constraint.b), plan.conditional_cov(sigma)))
}

/// `m` draws from `N(0, Σ)` conditioned on `A x = b`, one per row.
pub fn sample_conditional(
    sigma: &Matrix,
    constraint: &LinearConstraint,
    m: usize,
    seed: u64,
    repair: PsdRepair,
) -> Result<Matrix, SamplerError> {
    if constraint.b.len() != constraint.a.nrows() {
        return Err(SamplerError::DimensionMismatch("b length differs from A rows".into()));
    }
    let plan = ConditioningPlan::new(sigma, &constraint.a, false)?;
    let factor = covariance_factor(sigma, repair)?;
    let d = sigma.nrows();
    let stream = SeedStream::new(seed, "conditional");
    let rows: Vec<Vector> = (0..m)
        .into_par_iter()
        .map(|i| {
            let x = &factor * standard_normals(&mut stream.rng(i as u64), d);
            plan.adjust(&x, &constraint.b)
        })
        .collect();
    Ok(stack_rows(&rows, d))
}

/// Constraints `A = C ⊗ vᵀ` on a `p × q` Gaussian matrix `X`: row `i`
/// requires `Σⱼ C[i,j] · (X v)_j = b_i`, e.g. zonal sums over a lag range.
#[derive(Debug, Clone)]
pub struct KroneckerConstraint {
    /// `r × p` combination of rows.
    pub rows: Matrix,
    /// Length-`q` weights on columns.
    pub col_weights: Vector,
}

impl KroneckerConstraint {
    /// `C X v`.
    pub fn apply(&self, x: &Matrix) -> Vector {
        &self.rows * (x * &self.col_weights)
    }

    /// Dense `A` for the row-major flattening of `X`.
    pub fn dense(&self) -> Matrix {
        self.rows.kronecker(&self.col_weights.transpose())
    }
}

/// Conditioning of `N(0, Σ_S ⊗ Σ_T)` on a [`KroneckerConstraint`] without
/// forming the `(pq) × (pq)` covariance.
///
/// With `A = C ⊗ vᵀ`, `ΣAᵀ = (Σ_S Cᵀ) ⊗ (Σ_T v)` and
/// `AΣAᵀ = (C Σ_S Cᵀ) · (vᵀ Σ_T v)`, so the update `K δ` is the outer
/// product of `Σ_S Cᵀ (C Σ_S Cᵀ)⁻¹ δ` and `Σ_T v / (vᵀ Σ_T v)`.
#[derive(Debug, Clone)]
pub struct KroneckerConditioner {
    factor: KroneckerFactor,
    constraint: KroneckerConstraint,
    kept: Vec<usize>,
    dropped: Vec<usize>,
    row_gain: Matrix,
    col_profile: Vector,
}

impl KroneckerConditioner {
    pub fn new(
        spatial: &Matrix,
        temporal: &Matrix,
        constraint: KroneckerConstraint,
        repair: PsdRepair,
        drop_dependent: bool,
    ) -> Result<Self, SamplerError> {
        let (p, q) = (spatial.nrows(), temporal.nrows());
        if constraint.rows.ncols() != p || constraint.col_weights.len() != q {
            return Err(SamplerError::DimensionMismatch(format!(
                "constraint is {}x({}), model is {p}x{q}",
                constraint.rows.nrows(),
                constraint.col_weights.len()
            )));
        }
        let factor = KroneckerFactor::new(spatial, temporal, repair)?;
        let tv = temporal * &constraint.col_weights;
        let col_var = constraint.col_weights.dot(&tv);
        let r = constraint.rows.nrows();
        if r > 0 && col_var <= DEPENDENT_ROW_TOL * temporal.diagonal().amax() {
            return Err(SamplerError::SingularConstraint);
        }
        let sct = spatial * constraint.rows.transpose();
        let m = symmetrize(&(&constraint.rows * &sct));
        let kept = independent_rows(&m);
        let dropped: Vec<usize> = (0..r).filter(|i| !kept.contains(i)).collect();
        if !dropped.is_empty() {
            if !drop_dependent {
                return Err(SamplerError::SingularConstraint);
            }
            log::warn!("dropping {} dependent aggregate constraint(s)", dropped.len());
        }
        let sct_kept = Matrix::from_fn(p, kept.len(), |i, j| sct[(i, kept[j])]);
        let m_kept = Matrix::from_fn(kept.len(), kept.len(), |i, j| m[(kept[i], kept[j])]);
        let row_gain = if kept.is_empty() {
            Matrix::zeros(p, 0)
        } else {
            let ch = nalgebra::Cholesky::new(m_kept).ok_or(SamplerError::SingularConstraint)?;
            ch.solve(&sct_kept.transpose()).transpose()
        };
        let col_profile = if r > 0 { tv / col_var } else { Vector::zeros(q) };
        Ok(Self {
            factor,
            constraint,
            kept,
            dropped,
            row_gain,
            col_profile,
        })
    }

    pub fn constraint(&self) -> &KroneckerConstraint {
        &self.constraint
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    /// Move `x` onto `C X v = b` (kept rows only).
    pub fn adjust(&self, x: &mut Matrix, b: &Vector) {
        if self.kept.is_empty() {
            return;
        }
        let current = self.constraint.apply(x);
        let delta = Vector::from_fn(self.kept.len(), |i, _| b[self.kept[i]] - current[self.kept[i]]);
        let row_shift = &self.row_gain * delta;
        *x += &row_shift * self.col_profile.transpose();
    }

    /// One conditioned `p × q` draw.
    pub fn draw(&self, rng: &mut ChaCha20Rng, b: &Vector) -> Matrix {
        let mut x = self.factor.draw(rng);
        self.adjust(&mut x, b);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::kron;

    fn sample_cov(x: &Matrix) -> (Vector, Matrix) {
        let n = x.nrows() as f64;
        let mean = x.row_mean().transpose();
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= mean.transpose();
        }
        (mean, c.transpose() * &c / n)
    }

    #[test]
    fn identity_covariance_sampling() {
        let x = sample_mvn(&Matrix::identity(2, 2), 100_000, 1, PsdRepair::Strict).unwrap();
        let (_, c) = sample_cov(&x);
        assert!((c - Matrix::identity(2, 2)).amax() <= 0.02);
    }

    #[test]
    fn scalar_variance() {
        let x = sample_mvn(&Matrix::from_element(1, 1, 4.0), 100_000, 2, PsdRepair::Strict).unwrap();
        let (_, c) = sample_cov(&x);
        assert!((c[(0, 0)].sqrt() - 2.0).abs() <= 0.04);
    }

    #[test]
    fn zero_draws_and_determinism() {
        assert_eq!(sample_mvn(&Matrix::identity(3, 3), 0, 1, PsdRepair::Strict).unwrap().nrows(), 0);
        let s = Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let a = sample_mvn(&s, 50, 9, PsdRepair::Strict).unwrap();
        let b = sample_mvn(&s, 50, 9, PsdRepair::Strict).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_mvn(&s, 50, 10, PsdRepair::Strict).unwrap());
    }

    #[test]
    fn psd_repair_is_opt_in() {
        let singular = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            sample_mvn(&singular, 10, 1, PsdRepair::Strict).unwrap_err(),
            SamplerError::NotPsd
        );
        let x = sample_mvn(&singular, 10, 1, PsdRepair::Clip).unwrap();
        for row in x.row_iter() {
            assert!((row[0] - row[1]).abs() < 1e-4);
        }
    }

    #[test]
    fn kronecker_shapes_and_identity_case() {
        let x = sample_kronecker(&Matrix::identity(8, 8), &Matrix::identity(24, 24), 3, 1, PsdRepair::Strict).unwrap();
        assert_eq!(x.ncols(), 192);
        let y = sample_kronecker(&Matrix::identity(2, 2), &Matrix::identity(2, 2), 50_000, 4, PsdRepair::Strict).unwrap();
        let (_, c) = sample_cov(&y);
        assert!((c - Matrix::identity(4, 4)).amax() < 0.03);
    }

    #[test]
    fn full_conditioning() {
        let sigma = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = LinearConstraint {
            a: Matrix::identity(2, 2),
            b: Vector::from_vec(vec![1.5, -0.5]),
        };
        let (mu, cov) = condition_on_linear(&sigma, &c).unwrap();
        assert!((mu - &c.b).amax() < 1e-12);
        assert!(cov.amax() < 1e-12);
        let draws = sample_conditional(&sigma, &c, 20, 3, PsdRepair::Strict).unwrap();
        for row in draws.row_iter() {
            assert!((row.transpose() - &c.b).amax() < 1e-12);
        }
    }

    #[test]
    fn sum_to_zero_closed_form() {
        let c = LinearConstraint {
            a: Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            b: Vector::from_vec(vec![0.0]),
        };
        let (mu, cov) = condition_on_linear(&Matrix::identity(2, 2), &c).unwrap();
        assert!(mu.amax() < 1e-15);
        let expected = Matrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!((cov - expected).amax() < 1e-15);
    }

    #[test]
    fn sum_constraint_on_24_lags() {
        let d = 24;
        let c = LinearConstraint {
            a: Matrix::from_element(1, d, 1.0),
            b: Vector::from_vec(vec![3.25]),
        };
        let draws = sample_conditional(&Matrix::identity(d, d), &c, 2000, 5, PsdRepair::Strict).unwrap();
        for row in draws.row_iter() {
            assert!((row.sum() - 3.25).abs() <= 1e-6);
        }
    }

    #[test]
    fn dependent_rows_are_singular_unless_dropped() {
        let a = Matrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        let sigma = Matrix::identity(3, 3);
        let c = LinearConstraint {
            a: a.clone(),
            b: Vector::from_vec(vec![1.0, 2.0]),
        };
        assert_eq!(condition_on_linear(&sigma, &c).unwrap_err(), SamplerError::SingularConstraint);
        let plan = ConditioningPlan::new(&sigma, &a, true).unwrap();
        assert_eq!(plan.kept(), &[0]);
        assert_eq!(plan.dropped(), &[1]);
    }

    #[test]
    fn structured_conditioning_matches_dense() {
        let s = Matrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 1.0, 0.4, 0.1, 0.4, 1.0]);
        let t = Matrix::from_fn(4, 4, |i, j| 0.6f64.powi((i as i32 - j as i32).abs()));
        let constraint = KroneckerConstraint {
            rows: Matrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            col_weights: Vector::from_vec(vec![0.0, 1.0, 1.0, 1.0]),
        };
        let b = Vector::from_vec(vec![0.7, -1.2]);
        let dense_sigma = kron(&s, &t);
        let plan = ConditioningPlan::new(&dense_sigma, &constraint.dense(), false).unwrap();
        let cond = KroneckerConditioner::new(&s, &t, constraint.clone(), PsdRepair::Strict, false).unwrap();
        let stream = SeedStream::new(8, "test");
        for i in 0..20 {
            let mut rng = stream.rng(i);
            let x = cond.factor.draw(&mut rng);
            let mut structured = x.clone();
            cond.adjust(&mut structured, &b);
            let dense = plan.adjust(&flatten_row_major(&x), &b);
            assert!((flatten_row_major(&structured) - dense).amax() < 1e-12);
            assert!((constraint.apply(&structured) - &b).amax() < 1e-12);
        }
    }

    #[test]
    fn seed_streams_are_distinct() {
        use rand::Rng;
        let a = SeedStream::new(1, "wind");
        let b = SeedStream::new(1, "load");
        assert_ne!(a.rng(0).random::<u64>(), b.rng(0).random::<u64>());
        assert_ne!(a.rng(0).random::<u64>(), a.rng(1).random::<u64>());
        assert_eq!(a.rng(3).random::<u64>(), a.rng(3).random::<u64>());
    }
}
