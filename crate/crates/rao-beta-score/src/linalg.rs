//! Minimal dense linear algebra on `ndarray` types: Cholesky factorization
//! and the handful of derived operations the estimators and tests need.
//! Everything assumes small, dense, symmetric positive definite matrices.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Lower Cholesky factor L with A = L Lᵀ.
///
/// Fails with a factorization error when a pivot is not strictly positive,
/// i.e. the matrix is not numerically positive definite.
pub(crate) fn cholesky(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Structure(format!(
            "matrix is not square: {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Factorization(format!(
                "matrix is not positive definite (pivot {d:.3e} at index {j})"
            )));
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

/// Solve A x = b given the lower Cholesky factor of A.
pub(crate) fn chol_solve_vec(l: &Array2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.to_owned();
    // forward: L y = b
    for i in 0..n {
        for k in 0..i {
            let t = l[(i, k)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    // backward: Lᵀ x = y
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let t = l[(k, i)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub(crate) fn chol_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::<f64>::zeros(n);
        e[j] = 1.0;
        let x = chol_solve_vec(l, &e.view());
        inv.column_mut(j).assign(&x);
    }
    // exact symmetry despite rounding
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = m;
            inv[(j, i)] = m;
        }
    }
    inv
}

/// log |A| from the Cholesky factor of A.
pub(crate) fn chol_logdet(l: &Array2<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Inverse of a symmetric positive definite matrix.
pub(crate) fn spd_inverse(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(chol_inverse(&cholesky(a)?))
}

/// Column-major vectorization vec(A).
pub(crate) fn vec_of(a: &ArrayView2<f64>) -> Array1<f64> {
    let (r, c) = (a.nrows(), a.ncols());
    let mut v = Array1::<f64>::zeros(r * c);
    for j in 0..c {
        for i in 0..r {
            v[j * r + i] = a[(i, j)];
        }
    }
    v
}

/// Kronecker product A ⊗ B.
pub(crate) fn kron(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    let mut out = Array2::<f64>::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Quadratic form xᵀ A x.
pub(crate) fn quad_form(a: &ArrayView2<f64>, x: &ArrayView1<f64>) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += a[(i, j)] * x[j];
        }
        s += x[i] * row;
    }
    s
}
