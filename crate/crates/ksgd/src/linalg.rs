//! Small helpers for symmetric matrices used by the solver and its tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{KsgdError, Result};

/// Replaces `m` with `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut ev: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    DVector::from_vec(ev)
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// `||a - b||_2 / ||b||_2` for symmetric `a`, `b`.
pub fn rel_spectral_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = spectral_norm_sym(b);
    if denom == 0.0 {
        return spectral_norm_sym(&(a - b));
    }
    spectral_norm_sym(&(a - b)) / denom
}

/// Symmetric positive semidefinite square root via eigendecomposition.
///
/// Errors when an eigenvalue is materially negative (beyond `-1e-12` times
/// the spectral norm), since the square root is then undefined.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let tol = 1e-12 * eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -tol {
            return Err(KsgdError::NumericalFailure(format!(
                "matrix square root of non-PSD matrix (eigenvalue {v})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let d = DMatrix::from_diagonal(&vals);
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}
