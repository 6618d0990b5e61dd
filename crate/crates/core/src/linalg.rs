//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &Matrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Lower Cholesky factor, or `None` when the matrix is not numerically SPD.
pub fn cholesky_lower(m: &Matrix) -> Option<Matrix> {
    nalgebra::Cholesky::new(m.clone()).map(|c| c.l())
}

pub fn is_positive_definite(m: &Matrix) -> bool {
    nalgebra::Cholesky::new(m.clone()).is_some()
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(m: &Matrix) -> Option<Matrix> {
    nalgebra::Cholesky::new(m.clone()).map(|c| symmetrize(&c.inverse()))
}

/// `log det` of an SPD matrix via its Cholesky factor.
pub fn log_det_spd(m: &Matrix) -> Option<f64> {
    let l = cholesky_lower(m)?;
    Some(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Kronecker product `A ⊗ B`, indexed `(i·q + k, j·q + l) = A[i,j]·B[k,l]`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Eigenvalues in decreasing order with matching eigenvector columns.
pub fn sorted_eigen(m: &Matrix) -> (Vector, Matrix) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// A square-root factor `F` with `F Fᵀ` equal to `m` after clipping its
/// eigenvalues from below at `floor`.
pub fn clipped_sqrt_factor(m: &Matrix, floor: f64) -> Matrix {
    let (values, vectors) = sorted_eigen(m);
    let mut factor = vectors;
    for (j, v) in values.iter().enumerate() {
        let s = v.max(floor).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    factor
}

/// Rescale a covariance-like matrix to unit diagonal. Rows with a
/// non-positive diagonal are replaced by the corresponding identity row.
pub fn to_correlation(m: &Matrix) -> Matrix {
    let n = m.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = m[(i, i)];
            if d > 0.0 {
                d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if scale[i] == 0.0 || scale[j] == 0.0 {
            0.0
        } else {
            m[(i, j)] / (scale[i] * scale[j])
        }
    })
}

/// Spectral norm via the largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Serde adapter storing a matrix as an array of rows.
pub mod matrix_serde {
    use super::Matrix;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().cloned().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_index_convention() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = Matrix::from_row_slice(2, 2, &[0.0, 5.0, 6.0, 7.0]);
        let k = kron(&a, &b);
        assert_eq!(k[(0 * 2 + 1, 1 * 2 + 0)], a[(0, 1)] * b[(1, 0)]);
        assert_eq!(k[(1 * 2 + 1, 0 * 2 + 1)], a[(1, 0)] * b[(1, 1)]);
    }

    #[test]
    fn sorted_eigen_is_decreasing() {
        let m = Matrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 3.0, 0.1, 0.0, 0.1, 1.0]);
        let (values, vectors) = sorted_eigen(&m);
        assert!(values[0] >= values[1] && values[1] >= values[2]);
        let rebuilt = &vectors * Matrix::from_diagonal(&values) * vectors.transpose();
        assert!((rebuilt - m).abs().max() < 1e-12);
    }

    #[test]
    fn correlation_handles_zero_diagonal() {
        let m = Matrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0]);
        assert_eq!(to_correlation(&m), Matrix::identity(2, 2));
    }
}
