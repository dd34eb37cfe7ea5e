//! Small dense-matrix helpers shared by the phase-space modules.
//!
//! All phase-space matrices use the q–p ordering `x = (q_1..q_N, p_1..p_N)`,
//! so the symplectic form is `Υ = [[0, I], [-I, 0]]`. Multiplication by `Υ`
//! is a block swap with a sign flip and never needs a dense product.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};

/// Dense `Υ` for `n` modes.
pub fn symplectic_form(n: usize) -> Array2<f64> {
    let mut u = Array2::zeros((2 * n, 2 * n));
    for i in 0..n {
        u[[i, n + i]] = 1.0;
        u[[n + i, i]] = -1.0;
    }
    u
}

/// `Υ · m` for a matrix with `2n` rows.
pub fn upsilon_left(m: &ArrayView2<f64>) -> Array2<f64> {
    let n = m.nrows() / 2;
    let mut out = Array2::zeros(m.raw_dim());
    out.slice_mut(s![..n, ..]).assign(&m.slice(s![n.., ..]));
    out.slice_mut(s![n.., ..]).assign(&m.slice(s![..n, ..]).mapv(|v| -v));
    out
}

/// `m · Υ` for a matrix with `2n` columns.
pub fn upsilon_right(m: &ArrayView2<f64>) -> Array2<f64> {
    let n = m.ncols() / 2;
    let mut out = Array2::zeros(m.raw_dim());
    out.slice_mut(s![.., ..n]).assign(&m.slice(s![.., n..]).mapv(|v| -v));
    out.slice_mut(s![.., n..]).assign(&m.slice(s![.., ..n]));
    out
}

/// `(m + mᵀ) / 2`, in place.
pub fn symmetrize(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
}

pub fn max_abs(m: &ArrayView2<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Residual `‖MᵀΥM − Υ‖_max`.
pub fn symplectic_residual(m: &ArrayView2<f64>) -> f64 {
    let um = upsilon_left(m);
    let prod = m.t().dot(&um);
    let n = m.nrows() / 2;
    max_abs_diff(&prod.view(), &symplectic_form(n).view())
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(m: &ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let (vals, vecs) = m.to_owned().eigh(UPLO::Lower)?;
    Ok((vals, vecs))
}

/// Applies `f` to the spectrum of a symmetric matrix. Eigenvalues below
/// `clamp` are raised to zero before `f` sees them.
pub fn sym_matrix_fn(m: &ArrayView2<f64>, clamp: f64, f: impl Fn(f64) -> f64) -> Result<Array2<f64>> {
    let (vals, vecs) = sym_eigen(m)?;
    let mapped: Array1<f64> = vals.mapv(|v| f(if v.abs() < clamp { 0.0 } else { v }));
    let scaled = &vecs * &mapped.view().insert_axis(Axis(0));
    Ok(scaled.dot(&vecs.t()))
}

/// `ln det` of a symmetric positive-definite matrix via Cholesky.
pub fn ln_det_spd(m: &ArrayView2<f64>) -> Result<f64> {
    use ndarray_linalg::Cholesky;
    let l = m
        .to_owned()
        .cholesky(UPLO::Lower)
        .map_err(|e| Error::Numeric(format!("matrix is not positive definite: {e}")))?;
    Ok(l.diag().iter().map(|d| 2.0 * d.ln()).sum())
}

/// Rows `rows` of `m`, in the given order.
pub fn select_rows(m: &ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows)
}

/// Principal submatrix on `idx`.
pub fn principal_submatrix(m: &ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx).select(Axis(1), idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn upsilon_products_match_dense() {
        let m = array![[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0], [9.0, 1.0, 2.0, 3.0], [4.0, 5.0, 6.0, 7.0]];
        let u = symplectic_form(2);
        assert_eq!(upsilon_left(&m.view()), u.dot(&m));
        assert_eq!(upsilon_right(&m.view()), m.dot(&u));
    }

    #[test]
    fn symplectic_form_squares_to_minus_identity() {
        let u = symplectic_form(3);
        let sq = u.dot(&u);
        assert_eq!(sq, -Array2::<f64>::eye(6));
        assert_eq!(u.t().to_owned(), -u);
    }

    #[test]
    fn ln_det_matches_product_of_eigenvalues() {
        let m = array![[2.0, 0.5], [0.5, 1.0]];
        let ld = ln_det_spd(&m.view()).unwrap();
        assert!((ld - (2.0f64 - 0.25).ln()).abs() < 1e-14);
    }
}
