//! Small dense linear-algebra helpers on top of `faer`.

use faer::{c64, Mat, MatRef, Side};

use crate::error::{CiaError, Result};

/// Dense complex matrix used throughout the crate.
pub type CMat = Mat<c64>;

pub(crate) const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// Frobenius norm.
pub fn frobenius(m: MatRef<'_, c64>) -> f64 {
    m.norm_l2()
}

/// Frobenius distance between the smaller Gram matrix of `m` and the identity.
pub fn gram_identity_deviation(m: MatRef<'_, c64>) -> f64 {
    let gram = if m.nrows() >= m.ncols() {
        m.adjoint() * m
    } else {
        m * m.adjoint()
    };
    let n = gram.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { ONE } else { ZERO };
            acc += (gram[(i, j)] - target).norm_sqr();
        }
    }
    acc.sqrt()
}

/// Full singular value decomposition: singular values in non-increasing
/// order together with the full right singular basis (columns of `V`).
pub fn svd_right(m: MatRef<'_, c64>) -> Result<(Vec<f64>, CMat)> {
    let svd = m
        .svd()
        .map_err(|e| CiaError::Decomposition(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector();
    let values = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((values, svd.V().to_owned()))
}

/// Singular values only, non-increasing.
pub fn singular_values(m: MatRef<'_, c64>) -> Result<Vec<f64>> {
    m.singular_values()
        .map_err(|e| CiaError::Decomposition(format!("singular values: {e:?}")))
}

/// `S^{-1/2}` for a Hermitian positive definite `S`.
///
/// Fails when the smallest eigenvalue is not positive relative to the largest.
pub fn hermitian_inverse_sqrt(s: MatRef<'_, c64>) -> Result<CMat> {
    if s.nrows() != s.ncols() {
        return Err(CiaError::InvalidDimension(format!(
            "covariance must be square, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let n = s.nrows();
    let evd = s
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| CiaError::Decomposition(format!("eigen: {e:?}")))?;
    let lambda = evd.S().column_vector();
    let u = evd.U();
    let max = (0..n).map(|i| lambda[i].re).fold(0.0_f64, f64::max);
    let min = (0..n).map(|i| lambda[i].re).fold(f64::INFINITY, f64::min);
    if !(min > 1e-14 * max.max(f64::MIN_POSITIVE)) || !min.is_finite() {
        return Err(CiaError::InvalidParameter(format!(
            "covariance is not positive definite (smallest eigenvalue {min:e})"
        )));
    }
    let scaled = Mat::from_fn(n, n, |i, j| u[(i, j)] * (1.0 / lambda[j].re.sqrt()));
    Ok(&scaled * u.adjoint())
}

/// `log2 det(M)` for a Hermitian positive definite `M`.
pub fn log2_det_hpd(m: MatRef<'_, c64>) -> Result<f64> {
    let eig = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| CiaError::Decomposition(format!("eigenvalues: {e:?}")))?;
    eig.iter().try_fold(0.0, |acc, &v| {
        if v > 0.0 {
            Ok(acc + v.log2())
        } else {
            Err(CiaError::InvalidParameter(format!(
                "matrix is not positive definite (eigenvalue {v:e})"
            )))
        }
    })
}

/// `sum_c p_c |m[row, c]|^2`.
pub fn weighted_row_power(m: MatRef<'_, c64>, row: usize, powers: &[f64]) -> f64 {
    debug_assert_eq!(m.ncols(), powers.len());
    powers
        .iter()
        .enumerate()
        .map(|(c, p)| p * m[(row, c)].norm_sqr())
        .sum()
}

/// Columns `cols` of `m`, in the given order.
pub fn select_columns(m: MatRef<'_, c64>, cols: &[usize]) -> CMat {
    Mat::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Complex matrix from a real 0/1 pattern.
pub(crate) fn indicator(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> CMat {
    Mat::from_fn(rows, cols, |i, j| if f(i, j) { ONE } else { ZERO })
}
