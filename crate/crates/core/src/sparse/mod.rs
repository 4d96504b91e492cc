//! Sequential sparse kernels and the Jacobi splitting.

mod csr;
mod jacobi;
mod vector;

pub use csr::CsrMatrix;
pub use jacobi::{
    extract_inverse_diagonal, is_diagonally_dominant, sequential_jacobi, spectral_radius_estimate,
    spectral_radius_estimate_with, weighted_residual_norm, ConvergenceMode, JacobiConfig,
    DEFAULT_EPSILON, DEFAULT_MAX_ITERATIONS, DIVERGENCE_FACTOR,
};
pub use vector::{axpy, dot, inf_norm, DenseVector};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SparseError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix must be square, got {n_rows}x{n_cols}")]
    NotSquare { n_rows: usize, n_cols: usize },
    #[error("zero or missing diagonal entry in row {row}")]
    SingularDiagonal { row: usize },
    #[error("entry ({row}, {col}) outside a {n_rows}x{n_cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// `y = A x`.
pub fn spmv(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>, SparseError> {
    let mut y = vec![0.0; a.n_rows()];
    spmv_into(a, x, &mut y)?;
    Ok(y)
}

/// `y = A x` into a caller-provided buffer.
pub fn spmv_into(a: &CsrMatrix, x: &[f64], y: &mut [f64]) -> Result<(), SparseError> {
    if x.len() != a.n_cols() {
        return Err(SparseError::DimensionMismatch {
            expected: a.n_cols(),
            found: x.len(),
        });
    }
    if y.len() != a.n_rows() {
        return Err(SparseError::DimensionMismatch {
            expected: a.n_rows(),
            found: y.len(),
        });
    }
    for (i, yi) in y.iter_mut().enumerate() {
        let (cols, vals) = a.row(i);
        *yi = cols.iter().zip(vals).fold(0.0, |acc, (&j, &v)| acc + v * x[j]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testgen::csr_example;
    use proptest::prelude::*;

    fn dense_matvec(d: &[f64], n_rows: usize, n_cols: usize, x: &[f64]) -> Vec<f64> {
        (0..n_rows)
            .map(|i| (0..n_cols).map(|j| d[i * n_cols + j] * x[j]).sum())
            .collect()
    }

    #[test]
    fn spmv_worked_example_row_sums() {
        let a = csr_example();
        let y = spmv(&a, &[1.0; 5]).unwrap();
        assert_eq!(y, vec![9.0, 9.0, 12.0, 15.0, 22.0]);
    }

    #[test]
    fn spmv_identity() {
        let x = vec![3.0, -1.5, 2.25, 0.0];
        assert_eq!(spmv(&CsrMatrix::identity(4), &x).unwrap(), x);
    }

    #[test]
    fn spmv_dimension_mismatch() {
        let err = spmv(&CsrMatrix::identity(3), &[1.0, 2.0]).unwrap_err();
        assert_eq!(err, SparseError::DimensionMismatch { expected: 3, found: 2 });
    }

    #[test]
    fn spmv_random_8x8_against_dense() {
        use rand::{rngs::StdRng, Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(8);
        let dense: Vec<f64> = (0..64)
            .map(|_| if rng.gen_bool(0.3) { rng.gen_range(-5.0..5.0) } else { 0.0 })
            .collect();
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = CsrMatrix::from_dense(8, 8, &dense).unwrap();
        let y = spmv(&a, &x).unwrap();
        for (u, v) in y.iter().zip(dense_matvec(&dense, 8, 8, &x)) {
            assert!((u - v).abs() <= 1e-12 * v.abs().max(1e-300));
        }
    }

    fn random_dense() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
        (1usize..=12, 1usize..=12).prop_flat_map(|(r, c)| {
            (
                Just(r),
                Just(c),
                proptest::collection::vec(
                    prop_oneof![3 => Just(0.0), 2 => -10.0f64..10.0],
                    r * c,
                ),
                proptest::collection::vec(-10.0f64..10.0, c),
            )
        })
    }

    proptest! {
        #[test]
        fn spmv_matches_dense_oracle((r, c, d, x) in random_dense()) {
            let a = CsrMatrix::from_dense(r, c, &d).unwrap();
            a.validate().unwrap();
            let y = spmv(&a, &x).unwrap();
            let oracle = dense_matvec(&d, r, c, &x);
            for (i, (u, v)) in y.iter().zip(&oracle).enumerate() {
                // relative to the magnitude of the summed terms, so cancellation is not penalised
                let scale: f64 = (0..c).map(|j| (d[i * c + j] * x[j]).abs()).sum();
                prop_assert!((u - v).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE));
            }
        }
    }
}
