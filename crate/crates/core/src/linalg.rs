//! Dense matrix helpers: Kronecker products and sums, column-stacking
//! vectorization, the matrix exponential and a guarded LU solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot size below which a dense solve is declared singular.
const PIVOT_RTOL: f64 = 1e-13;

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Kronecker sum `A ⊕ B = A ⊗ I + I ⊗ B` of two square matrices of equal size.
pub fn kron_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() || !b.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "kron_sum needs square matrices, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "kron_sum needs equal dimensions, got {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let eye = DMatrix::identity(a.nrows(), a.nrows());
    Ok(a.kronecker(&eye) + eye.kronecker(b))
}

/// Column-stacking vectorization: entries `0..d` hold column 0, and so on.
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    // nalgebra stores matrices column-major, so this is a plain copy.
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`] for a `d × d` matrix.
pub fn unvec(v: &DVector<f64>, d: usize) -> Result<DMatrix<f64>> {
    if v.len() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "cannot reshape a vector of length {} into {d}x{d}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(d, d, v.as_slice()))
}

/// Matrix exponential (Padé approximation with scaling and squaring).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.exp()
}

/// Solves `A X = B`, failing with [`Error::SingularSystem`] when `A` is
/// numerically rank deficient.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let lu = a.clone().lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if !(max > 0.0) || min <= PIVOT_RTOL * max {
        return Err(Error::SingularSystem(context));
    }
    lu.solve(b).ok_or(Error::SingularSystem(context))
}

/// Vector right-hand side variant of [`solve`].
pub fn solve_vec(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    context: &'static str,
) -> Result<DVector<f64>> {
    let rhs = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let x = solve(a, &rhs, context)?;
    Ok(DVector::from_column_slice(x.as_slice()))
}

/// Lower-triangular `L` with `L L^T = A` for a symmetric positive
/// semidefinite `A`.
///
/// Eigenvalues within `-1e-8 · scale` of zero are clamped to zero first; a
/// more negative eigenvalue is reported as [`Error::NotPsd`]. Pivots that
/// vanish (rank deficiency) produce zero columns instead of failing.
pub fn psd_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let sym = (a + a.transpose()) * 0.5;
    let scale = max_abs(&sym).max(1.0);
    let eig = sym.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -1e-8 * scale {
        return Err(Error::NotPsd(min));
    }
    let clamped = eig
        .eigenvalues
        .map(|l| if l < 1e-12 * scale { 0.0 } else { l });
    let b = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();

    let tol = 1e-12 * scale;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = b[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot <= tol {
            continue;
        }
        let root = pivot.sqrt();
        l[(j, j)] = root;
        for i in j + 1..n {
            let mut v = b[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / root;
        }
    }
    Ok(l)
}

pub(crate) fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
