//! Small symmetric linear-algebra helpers shared by the population criteria
//! and the sampler.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Matrices at or above this 2-norm condition number are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Relative threshold below which a matrix or vector entry counts as zero.
pub const ZERO_REL_TOL: f64 = 1e-8;

/// `ZERO_REL_TOL` times the largest absolute entry.
pub fn zero_tol<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    ZERO_REL_TOL * values.into_iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn condition_of(eigenvalues: &DVector<f64>) -> f64 {
    let max = eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min = eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a symmetric positive definite matrix, or `Err(condition)` if it
/// is too ill-conditioned to trust. Cholesky first, eigendecomposition as
/// fallback.
pub fn guarded_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, f64> {
    let eig = SymmetricEigen::new(m.clone());
    let cond = condition_of(&eig.eigenvalues);
    if cond >= CONDITION_LIMIT {
        return Err(cond);
    }
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.inverse());
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose())
}

/// Solves `m x = rhs` for symmetric positive definite `m`; `None` when `m` is
/// singular by the condition guard.
pub fn guarded_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if m.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let eig = SymmetricEigen::new(m.clone());
    if condition_of(&eig.eigenvalues) >= CONDITION_LIMIT {
        return None;
    }
    match m.clone().cholesky() {
        Some(chol) => Some(chol.solve(rhs)),
        None => {
            let proj = eig.eigenvectors.transpose() * rhs;
            let scaled = proj.component_div(&eig.eigenvalues);
            Some(&eig.eigenvectors * scaled)
        }
    }
}

/// Symmetric square root `S` with `S * S = m` for a positive semidefinite
/// matrix. Eigenvalues down to `-1e-10 * max` are clamped to zero.
pub fn symmetric_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, f64> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min < -1e-10 * max {
        return Err(min);
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Submatrix with the given rows and columns, in the given order.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}
