//! Structural matrix calculus: half-vectorization operators, the
//! duplication/elimination/permutation matrices tying them together, and the
//! closed-form equicorrelation inverse.
//!
//! Ordering contract (fixed repo-wide): every half-vectorization walks the
//! lower triangle in column-major order. `vech` keeps the diagonal, `vecl`
//! drops it, so for p = 3
//!
//! ```text
//! vech(A) = (a11, a21, a31, a22, a32, a33)
//! vecl(A) = (a21, a31, a32)
//! ```
//!
//! and the `vecl` pair sequence (2,1),(3,1),(3,2) coincides, entry by entry,
//! with the lexicographic i<j enumeration (1,2),(1,3),(2,3) of unordered
//! pairs. The permutation M = (P, Q) reorders vech(Σ) into variances first,
//! covariances second.
//!
//! Dense copies of the structural matrices are available up to p = 64; all
//! mapping operations (`apply`, `apply_transpose`) work through index maps
//! at any dimension.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Relative tolerance accepted on symmetry violations before erroring.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Largest dimension for which dense structural matrices are materialized.
pub const DENSE_LIMIT: usize = 64;

/// Number of entries of vech for dimension p: p(p+1)/2.
pub const fn vech_len(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Number of entries of vecl for dimension p: p(p−1)/2.
pub const fn vecl_len(p: usize) -> usize {
    p * (p - 1) / 2
}

/// Position of (i, j), i ≥ j (0-based), within vech of order p.
pub const fn vech_index(p: usize, i: usize, j: usize) -> usize {
    j * (2 * p - j + 1) / 2 + (i - j)
}

/// Position of (i, j), i > j (0-based), within vecl of order p.
pub const fn vecl_index(p: usize, i: usize, j: usize) -> usize {
    j * (p - 1) - j * (j + 1) / 2 + i - 1
}

/// Lower off-diagonal pairs (i, j), i > j, in vecl (column-major) order.
pub fn lower_pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |j| ((j + 1)..p).map(move |i| (i, j)))
}

/// A symmetric matrix validated on construction.
///
/// Inputs may violate symmetry by at most [`SYMMETRY_TOL`] relative to
/// max(1, |aᵢⱼ|); accepted entries are symmetrized by averaging so the
/// stored triangle is authoritative.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: Array2<f64>,
}

impl SymMatrix {
    pub fn new(a: Array2<f64>) -> Result<Self> {
        let (r, c) = (a.nrows(), a.ncols());
        if r != c {
            return Err(Error::Structure(format!("matrix is not square: {r}x{c}")));
        }
        if r == 0 {
            return Err(Error::Structure("matrix has dimension zero".into()));
        }
        let mut data = a;
        for i in 0..r {
            for j in 0..i {
                let (x, y) = (data[(i, j)], data[(j, i)]);
                let delta = (x - y).abs();
                if delta > SYMMETRY_TOL * x.abs().max(1.0) {
                    return Err(Error::Structure(format!(
                        "matrix is not symmetric: |a[{i},{j}] - a[{j},{i}]| = {delta:.3e}"
                    )));
                }
                let m = 0.5 * (x + y);
                data[(i, j)] = m;
                data[(j, i)] = m;
            }
        }
        Ok(Self { data })
    }

    /// Build from an exactly symmetric source without tolerance checking.
    pub(crate) fn from_symmetric_unchecked(data: Array2<f64>) -> Self {
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }
}

/// Which half-vectorization produced a [`HalfVec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfVecKind {
    /// Lower triangle including the diagonal, length p(p+1)/2.
    Vech,
    /// Lower triangle excluding the diagonal, length p(p−1)/2.
    Vecl,
}

/// A half-vectorized symmetric matrix together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfVec {
    pub kind: HalfVecKind,
    pub dim: usize,
    pub entries: Array1<f64>,
}

/// vech(A): stack the part of each column on or below the diagonal.
pub fn vech(a: &SymMatrix) -> HalfVec {
    let p = a.dim();
    let m = a.as_array();
    let mut v = Array1::<f64>::zeros(vech_len(p));
    let mut k = 0;
    for j in 0..p {
        for i in j..p {
            v[k] = m[(i, j)];
            k += 1;
        }
    }
    HalfVec {
        kind: HalfVecKind::Vech,
        dim: p,
        entries: v,
    }
}

/// vecl(A): stack the strictly-lower part of each column; requires p ≥ 2.
pub fn vecl(a: &SymMatrix) -> Result<HalfVec> {
    let p = a.dim();
    if p < 2 {
        return Err(Error::Structure(format!(
            "vecl requires dimension at least 2, got {p}"
        )));
    }
    let m = a.as_array();
    let mut v = Array1::<f64>::zeros(vecl_len(p));
    let mut k = 0;
    for j in 0..p {
        for i in (j + 1)..p {
            v[k] = m[(i, j)];
            k += 1;
        }
    }
    Ok(HalfVec {
        kind: HalfVecKind::Vecl,
        dim: p,
        entries: v,
    })
}

/// The structural matrices, stored as index maps and densified on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructKind {
    /// G_p, the p² × p(p+1)/2 0/1 matrix with vec(S) = G_p vech(S).
    Duplication,
    /// L_p, the Moore–Penrose pseudoinverse of G_p: L_p vec(S) = vech(S)
    /// for symmetric S and L_p G_p = I.
    Elimination,
    /// M = (P, Q), the vech-space permutation separating variances from
    /// covariances: Mᵀ vech(Σ) = ((Λ1)ᵀ, veclᵀ(Σ))ᵀ.
    Permutation,
}

#[derive(Debug, Clone)]
pub struct StructMatrix {
    pub kind: StructKind,
    pub dim: usize,
}

impl StructMatrix {
    /// Row and column counts of the dense representation.
    pub fn shape(&self) -> (usize, usize) {
        let p = self.dim;
        match self.kind {
            StructKind::Duplication => (p * p, vech_len(p)),
            StructKind::Elimination => (vech_len(p), p * p),
            StructKind::Permutation => (vech_len(p), vech_len(p)),
        }
    }

    /// Dense materialization; capped at [`DENSE_LIMIT`] because the test
    /// statistics only ever need the index maps.
    pub fn dense(&self) -> Result<Array2<f64>> {
        let p = self.dim;
        if p > DENSE_LIMIT {
            return Err(Error::Domain(format!(
                "dense structural matrices are materialized only for p <= {DENSE_LIMIT}, got {p}"
            )));
        }
        let (rows, cols) = self.shape();
        let mut out = Array2::<f64>::zeros((rows, cols));
        match self.kind {
            StructKind::Duplication => {
                for j in 0..p {
                    for i in 0..p {
                        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
                        out[(j * p + i, vech_index(p, hi, lo))] = 1.0;
                    }
                }
            }
            StructKind::Elimination => {
                for j in 0..p {
                    for i in j..p {
                        let k = vech_index(p, i, j);
                        if i == j {
                            out[(k, j * p + i)] = 1.0;
                        } else {
                            out[(k, j * p + i)] = 0.5;
                            out[(k, i * p + j)] = 0.5;
                        }
                    }
                }
            }
            StructKind::Permutation => {
                for (col, row) in variance_positions(p).into_iter().enumerate() {
                    out[(row, col)] = 1.0;
                }
                for (s, row) in covariance_positions(p).into_iter().enumerate() {
                    out[(row, p + s)] = 1.0;
                }
            }
        }
        Ok(out)
    }

    /// Apply the matrix to a vector through its index map.
    pub fn apply(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        let p = self.dim;
        let (rows, cols) = self.shape();
        if x.len() != cols {
            return Err(Error::Structure(format!(
                "length mismatch: expected {cols}, got {}",
                x.len()
            )));
        }
        let mut out = Array1::<f64>::zeros(rows);
        match self.kind {
            StructKind::Duplication => {
                for j in 0..p {
                    for i in 0..p {
                        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
                        out[j * p + i] = x[vech_index(p, hi, lo)];
                    }
                }
            }
            StructKind::Elimination => {
                for j in 0..p {
                    for i in j..p {
                        let k = vech_index(p, i, j);
                        out[k] = if i == j {
                            x[j * p + i]
                        } else {
                            0.5 * (x[j * p + i] + x[i * p + j])
                        };
                    }
                }
            }
            StructKind::Permutation => {
                for (col, row) in variance_positions(p).into_iter().enumerate() {
                    out[row] = x[col];
                }
                for (s, row) in covariance_positions(p).into_iter().enumerate() {
                    out[row] = x[p + s];
                }
            }
        }
        Ok(out)
    }

    /// Apply the transpose of the matrix through its index map.
    pub fn apply_transpose(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        let p = self.dim;
        let (rows, cols) = self.shape();
        if x.len() != rows {
            return Err(Error::Structure(format!(
                "length mismatch: expected {rows}, got {}",
                x.len()
            )));
        }
        let mut out = Array1::<f64>::zeros(cols);
        match self.kind {
            StructKind::Duplication => {
                // Gᵀ sums the symmetric pair for off-diagonal coordinates.
                for j in 0..p {
                    for i in j..p {
                        let k = vech_index(p, i, j);
                        out[k] = if i == j {
                            x[j * p + i]
                        } else {
                            x[j * p + i] + x[i * p + j]
                        };
                    }
                }
            }
            StructKind::Elimination => {
                for j in 0..p {
                    for i in j..p {
                        let k = vech_index(p, i, j);
                        if i == j {
                            out[j * p + i] = x[k];
                        } else {
                            out[j * p + i] = 0.5 * x[k];
                            out[i * p + j] = 0.5 * x[k];
                        }
                    }
                }
            }
            StructKind::Permutation => {
                for (col, row) in variance_positions(p).into_iter().enumerate() {
                    out[col] = x[row];
                }
                for (s, row) in covariance_positions(p).into_iter().enumerate() {
                    out[p + s] = x[row];
                }
            }
        }
        Ok(out)
    }
}

/// vech positions of the diagonal entries (σ₁², …, σ_p²), i.e. the columns
/// of the P block of M.
pub fn variance_positions(p: usize) -> Vec<usize> {
    (0..p).map(|i| vech_index(p, i, i)).collect()
}

/// vech positions of the off-diagonal entries in vecl order, i.e. the
/// columns of the Q block of M.
pub fn covariance_positions(p: usize) -> Vec<usize> {
    lower_pairs(p).map(|(i, j)| vech_index(p, i, j)).collect()
}

/// Duplication matrix G_p with vec(S) = G_p vech(S).
pub fn duplication_matrix(p: usize) -> Result<StructMatrix> {
    if p == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    Ok(StructMatrix {
        kind: StructKind::Duplication,
        dim: p,
    })
}

/// Elimination matrix L_p = (G_pᵀ G_p)⁻¹ G_pᵀ, the Moore–Penrose
/// pseudoinverse of G_p; satisfies L_p G_p = I and L_p vec(S) = vech(S)
/// for symmetric S.
pub fn elimination_matrix(p: usize) -> Result<StructMatrix> {
    if p == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    Ok(StructMatrix {
        kind: StructKind::Elimination,
        dim: p,
    })
}

/// The permutation M = (P, Q) with Mᵀ vech(Σ) stacking variances before
/// covariances; orthogonal, so M⁻¹ = Mᵀ.
pub fn reorder_permutation(p: usize) -> Result<StructMatrix> {
    if p == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    Ok(StructMatrix {
        kind: StructKind::Permutation,
        dim: p,
    })
}

/// The open interval of intraclass correlations keeping R(ρ) positive
/// definite: (−1/(p−1), 1), degenerating to (−∞, 1) at p = 1.
pub fn equicorr_interval(p: usize) -> (f64, f64) {
    if p > 1 {
        (-1.0 / (p as f64 - 1.0), 1.0)
    } else {
        (f64::NEG_INFINITY, 1.0)
    }
}

/// Equicorrelation matrix R(ρ) = (1−ρ) I + ρ 11ᵀ.
pub fn equicorr_matrix(rho: f64, p: usize) -> Result<SymMatrix> {
    check_equicorr_rho(rho, p)?;
    let mut r = Array2::<f64>::from_elem((p, p), rho);
    for i in 0..p {
        r[(i, i)] = 1.0;
    }
    Ok(SymMatrix::from_symmetric_unchecked(r))
}

pub(crate) fn check_equicorr_rho(rho: f64, p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    let (lo, hi) = equicorr_interval(p);
    if !(rho > lo && rho < hi) || !rho.is_finite() {
        return Err(Error::Domain(format!(
            "equicorrelation {rho} outside the admissible interval ({lo}, {hi}) for p = {p}"
        )));
    }
    Ok(())
}

/// Closed-form inverse of the equicorrelation matrix:
/// R(ρ)⁻¹ = (1/(1−ρ)) (I − ρ/(1+(p−1)ρ) 11ᵀ).
pub fn equicorr_inverse(rho: f64, p: usize) -> Result<SymMatrix> {
    check_equicorr_rho(rho, p)?;
    let pf = p as f64;
    let off = -rho / ((1.0 + (pf - 1.0) * rho) * (1.0 - rho));
    let diag = 1.0 / (1.0 - rho) + off;
    let mut r = Array2::<f64>::from_elem((p, p), off);
    for i in 0..p {
        r[(i, i)] = diag;
    }
    Ok(SymMatrix::from_symmetric_unchecked(r))
}
