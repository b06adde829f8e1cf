//! Gaussian density-power-divergence machinery: density, scores, DPD
//! weights, the information-type matrices J_β / ξ_β / K_β with their κ
//! constants, weighted scatter matrices, and the β-score estimating
//! functions U and V.
//!
//! Throughout, Σ = Λ^{1/2} R Λ^{1/2} splits the covariance into a variance
//! diagonal Λ and a correlation matrix R, and every prefactor of the form
//! (2π)^{βp/2} |Σ|^{β/2} is assembled in log space so large p·β cannot
//! overflow. Σ is always handled through its Cholesky factor; a matrix that
//! fails to factor surfaces as a typed error, never as NaNs.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{chol_inverse, chol_logdet, cholesky, quad_form, vec_of};
use crate::matrix::{
    covariance_positions, lower_pairs, variance_positions, vech_index, vech_len, vecl_len,
    SymMatrix,
};
use crate::Sample;

const LN_2PI: f64 = 1.837_877_066_409_345_6;

/// Mean vector, variance diagonal, and correlation matrix of a p-variate
/// normal distribution (Σ = Λ^{1/2} R Λ^{1/2}).
#[derive(Debug, Clone)]
pub struct GaussianParams {
    mu: Array1<f64>,
    lambda: Array1<f64>,
    corr: Array2<f64>,
}

impl GaussianParams {
    /// Validates dimensions, strict positivity of the variances, unit
    /// diagonal and positive definiteness of the correlation matrix.
    pub fn new(mu: Array1<f64>, lambda: Array1<f64>, corr: SymMatrix) -> Result<Self> {
        let p = mu.len();
        if p == 0 {
            return Err(Error::Structure("dimension must be positive".into()));
        }
        if lambda.len() != p || corr.dim() != p {
            return Err(Error::Structure(format!(
                "dimension mismatch: mu has {p}, lambda has {}, corr has {}",
                lambda.len(),
                corr.dim()
            )));
        }
        if let Some(j) = lambda.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!(
                "variance {} at coordinate {j} is not strictly positive",
                lambda[j]
            )));
        }
        let corr = corr.into_array();
        for j in 0..p {
            if (corr[(j, j)] - 1.0).abs() > 1e-10 {
                return Err(Error::Structure(format!(
                    "correlation matrix diagonal entry {} at {j} is not 1",
                    corr[(j, j)]
                )));
            }
        }
        cholesky(&corr.view())?;
        Ok(Self { mu, lambda, corr })
    }

    /// Split a covariance matrix into (μ, Λ, R).
    pub fn from_covariance(mu: Array1<f64>, sigma: SymMatrix) -> Result<Self> {
        let p = sigma.dim();
        let s = sigma.as_array();
        let mut lambda = Array1::<f64>::zeros(p);
        for j in 0..p {
            let v = s[(j, j)];
            if !(v > 0.0) {
                return Err(Error::Domain(format!(
                    "covariance diagonal entry {v} at {j} is not strictly positive"
                )));
            }
            lambda[j] = v;
        }
        let mut corr = s.clone();
        for i in 0..p {
            for j in 0..p {
                corr[(i, j)] /= (lambda[i] * lambda[j]).sqrt();
            }
            corr[(i, i)] = 1.0;
        }
        Self::new(mu, lambda, SymMatrix::from_symmetric_unchecked(corr))
    }

    pub fn standard(p: usize) -> Result<Self> {
        Self::new(
            Array1::zeros(p),
            Array1::ones(p),
            SymMatrix::from_symmetric_unchecked(Array2::eye(p)),
        )
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn lambda(&self) -> &Array1<f64> {
        &self.lambda
    }

    pub fn corr(&self) -> &Array2<f64> {
        &self.corr
    }

    /// Reconstruct Σ = Λ^{1/2} R Λ^{1/2}.
    pub fn covariance(&self) -> Array2<f64> {
        let p = self.dim();
        let mut s = self.corr.clone();
        for i in 0..p {
            for j in 0..p {
                s[(i, j)] *= (self.lambda[i] * self.lambda[j]).sqrt();
            }
        }
        s
    }
}

/// Cached per-parameter quantities reused by the operations below.
struct SigmaFactors {
    inv: Array2<f64>,
    logdet: f64,
}

fn sigma_factors(params: &GaussianParams) -> Result<SigmaFactors> {
    let sigma = params.covariance();
    let l = cholesky(&sigma.view())?;
    Ok(SigmaFactors {
        inv: chol_inverse(&l),
        logdet: chol_logdet(&l),
    })
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!(
            "beta must be nonnegative, got {beta}"
        )));
    }
    Ok(())
}

fn check_point(x: &ArrayView1<f64>, p: usize) -> Result<()> {
    if x.len() != p {
        return Err(Error::Structure(format!(
            "point has length {}, parameters have dimension {p}",
            x.len()
        )));
    }
    Ok(())
}

/// log f_θ(x) = −(p/2) log 2π − ½ log|Σ| − ½ (x−μ)ᵀΣ⁻¹(x−μ).
pub fn log_density(x: &ArrayView1<f64>, params: &GaussianParams) -> Result<f64> {
    let p = params.dim();
    check_point(x, p)?;
    let f = sigma_factors(params)?;
    let d = x - params.mu();
    let q = quad_form(&f.inv.view(), &d.view());
    Ok(-0.5 * (p as f64) * LN_2PI - 0.5 * f.logdet - 0.5 * q)
}

/// DPD weight w_β(x) = exp{−(β/2)(x−μ)ᵀΣ⁻¹(x−μ)} ∈ (0, 1].
pub fn dpd_weight(x: &ArrayView1<f64>, params: &GaussianParams, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let p = params.dim();
    check_point(x, p)?;
    let f = sigma_factors(params)?;
    let d = x - params.mu();
    let q = quad_form(&f.inv.view(), &d.view());
    Ok((-0.5 * beta * q).exp())
}

/// Score in μ: s_μ(x) = Σ⁻¹(x−μ).
pub fn score_mu(x: &ArrayView1<f64>, params: &GaussianParams) -> Result<Array1<f64>> {
    let p = params.dim();
    check_point(x, p)?;
    let f = sigma_factors(params)?;
    let d = x - params.mu();
    Ok(f.inv.dot(&d))
}

/// Score in vech(Σ):
/// s(x) = −½ G_pᵀ vec(Σ⁻¹) + ½ G_pᵀ vec(Σ⁻¹(x−μ)(x−μ)ᵀΣ⁻¹).
pub fn score_vech_sigma(x: &ArrayView1<f64>, params: &GaussianParams) -> Result<Array1<f64>> {
    let p = params.dim();
    check_point(x, p)?;
    let f = sigma_factors(params)?;
    let d = x - params.mu();
    let sd = f.inv.dot(&d);
    // Σ⁻¹ d dᵀ Σ⁻¹ is the outer product of Σ⁻¹d with itself
    let mut score = Array1::<f64>::zeros(vech_len(p));
    for j in 0..p {
        for i in j..p {
            let k = vech_index(p, i, j);
            let outer = sd[i] * sd[j];
            let inv = f.inv[(i, j)];
            // Gᵀ doubles off-diagonal coordinates
            let mult = if i == j { 0.5 } else { 1.0 };
            score[k] = mult * (outer - inv);
        }
    }
    Ok(score)
}

/// The scalar constants attached to a (p, β) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaSet {
    pub p: usize,
    pub beta: f64,
    /// κ₁ = 2(2β+1)^{−p/2−2}
    pub kappa1: f64,
    /// κ₂ = β²[4(2β+1)^{−p/2−2} − (β+1)^{−(p+2)}]
    pub kappa2: f64,
    /// κ₃ = κ₁⁻¹κ₂, the ratio entering the kernel-inverse correction
    pub kappa3: f64,
    /// β(β+1)^{−(p/2+1)}, subtracted from the mean weight to form κ̃₀
    pub xi_offset: f64,
}

/// All κ constants for a (p, β) pair.
pub fn kappa_constants(p: usize, beta: f64) -> Result<KappaSet> {
    if p == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    check_beta(beta)?;
    let pf = p as f64;
    let kappa1 = 2.0 * (2.0 * beta + 1.0).powf(-pf / 2.0 - 2.0);
    let kappa2 = beta
        * beta
        * (4.0 * (2.0 * beta + 1.0).powf(-pf / 2.0 - 2.0) - (beta + 1.0).powf(-(pf + 2.0)));
    Ok(KappaSet {
        p,
        beta,
        kappa1,
        kappa2,
        kappa3: kappa2 / kappa1,
        xi_offset: beta * (beta + 1.0).powf(-(pf / 2.0 + 1.0)),
    })
}

/// exp{−(βp/2) log 2π − (β/2) log|Σ|}, i.e. (2π)^{−βp/2}|Σ|^{−β/2}.
fn beta_prefactor(p: usize, beta: f64, logdet: f64) -> f64 {
    (-0.5 * beta * (p as f64 * LN_2PI + logdet)).exp()
}

/// Gᵀ vec(A) for symmetric A: doubles the off-diagonal coordinates.
fn gt_vec_sym(a: &ArrayView2<f64>) -> Array1<f64> {
    let p = a.nrows();
    let mut v = Array1::<f64>::zeros(vech_len(p));
    for j in 0..p {
        for i in j..p {
            let k = vech_index(p, i, j);
            v[k] = if i == j { a[(i, j)] } else { 2.0 * a[(i, j)] };
        }
    }
    v
}

/// The 1–2 vec positions a duplication-matrix column for pair (i ≥ j) hits.
fn vec_positions(p: usize, i: usize, j: usize) -> Vec<usize> {
    if i == j {
        vec![j * p + i]
    } else {
        vec![j * p + i, i * p + j]
    }
}

/// Gᵀ W G for a p²×p² matrix W, contracted through the duplication index
/// map (each G column touches at most two vec positions).
fn g_sandwich(w: &ArrayView2<f64>, p: usize) -> Array2<f64> {
    let m = vech_len(p);
    let mut out = Array2::<f64>::zeros((m, m));
    for j1 in 0..p {
        for i1 in j1..p {
            let rows = vec_positions(p, i1, j1);
            for j2 in 0..p {
                for i2 in j2..p {
                    let cols = vec_positions(p, i2, j2);
                    let mut s = 0.0;
                    for &r in &rows {
                        for &c in &cols {
                            s += w[(r, c)];
                        }
                    }
                    out[(vech_index(p, i1, j1), vech_index(p, i2, j2))] = s;
                }
            }
        }
    }
    out
}

/// L X Lᵀ for a p²×p² matrix X, through the elimination index map
/// (each L row averages at most two vec positions).
fn l_sandwich(x: &ArrayView2<f64>, p: usize) -> Array2<f64> {
    let m = vech_len(p);
    let mut out = Array2::<f64>::zeros((m, m));
    for j1 in 0..p {
        for i1 in j1..p {
            let rows = vec_positions(p, i1, j1);
            for j2 in 0..p {
                for i2 in j2..p {
                    let cols = vec_positions(p, i2, j2);
                    let mut s = 0.0;
                    for &r in &rows {
                        for &c in &cols {
                            s += x[(r, c)];
                        }
                    }
                    let w = 1.0 / (rows.len() as f64 * cols.len() as f64);
                    out[(vech_index(p, i1, j1), vech_index(p, i2, j2))] = w * s;
                }
            }
        }
    }
    out
}

/// J_β(θ) = E[s_θ s_θᵀ f_θ^β], block diagonal in (μ, vech Σ).
#[derive(Debug, Clone)]
pub struct JBeta {
    pub mu_block: Array2<f64>,
    pub vech_block: Array2<f64>,
}

/// Closed form of J_β(θ).
pub fn j_beta(params: &GaussianParams, beta: f64) -> Result<JBeta> {
    check_beta(beta)?;
    let p = params.dim();
    let pf = p as f64;
    let f = sigma_factors(params)?;
    let pref = beta_prefactor(p, beta, f.logdet);

    let mu_block = f
        .inv
        .mapv(|v| v * (beta + 1.0).powf(-pf / 2.0 - 1.0) * pref);

    let u = gt_vec_sym(&f.inv.view());
    let w = crate::linalg::kron(&f.inv.view(), &f.inv.view());
    let gwg = g_sandwich(&w.view(), p);
    let scale = (beta + 1.0).powf(-pf / 2.0 - 2.0) / 4.0 * pref;
    let m = vech_len(p);
    let mut vech_block = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            vech_block[(i, j)] = scale * (beta * beta * u[i] * u[j] + 2.0 * gwg[(i, j)]);
        }
    }
    Ok(JBeta {
        mu_block,
        vech_block,
    })
}

/// ξ_β(θ) = E[s_θ f_θ^β]; the μ block vanishes identically.
#[derive(Debug, Clone)]
pub struct XiBeta {
    pub p: usize,
    /// The vech(Σ) block; the μ block is 0_p for every β and p.
    pub vech_block: Array1<f64>,
}

impl XiBeta {
    /// Full (p + p(p+1)/2)-vector with the zero μ block stacked first.
    pub fn full(&self) -> Array1<f64> {
        let mut out = Array1::<f64>::zeros(self.p + self.vech_block.len());
        for (k, &v) in self.vech_block.iter().enumerate() {
            out[self.p + k] = v;
        }
        out
    }

    /// Outer product of the vech block with itself.
    pub fn outer_vech(&self) -> Array2<f64> {
        let m = self.vech_block.len();
        let mut out = Array2::<f64>::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] = self.vech_block[i] * self.vech_block[j];
            }
        }
        out
    }
}

/// Closed form of ξ_β(θ).
pub fn xi_beta(params: &GaussianParams, beta: f64) -> Result<XiBeta> {
    check_beta(beta)?;
    let p = params.dim();
    let pf = p as f64;
    let f = sigma_factors(params)?;
    let pref = beta_prefactor(p, beta, f.logdet);
    let scale = -0.5 * beta * (beta + 1.0).powf(-(pf / 2.0 + 1.0)) * pref;
    let vech_block = gt_vec_sym(&f.inv.view()).mapv(|v| v * scale);
    Ok(XiBeta { p, vech_block })
}

/// K_β(θ) = J_{2β}(θ) − ξ_β(θ)ξ_βᵀ(θ), block diagonal in (μ, vech Σ).
#[derive(Debug, Clone)]
pub struct KBeta {
    pub mu_block: Array2<f64>,
    pub vech_block: Array2<f64>,
}

/// Closed form of K_β(θ).
pub fn k_beta(params: &GaussianParams, beta: f64) -> Result<KBeta> {
    check_beta(beta)?;
    let p = params.dim();
    let pf = p as f64;
    let f = sigma_factors(params)?;
    // (2π)^{−βp}|Σ|^{−β} = squared β/2-prefactor
    let pref2 = beta_prefactor(p, 2.0 * beta, f.logdet);
    let kap = kappa_constants(p, beta)?;

    let mu_block = f
        .inv
        .mapv(|v| v * (2.0 * beta + 1.0).powf(-pf / 2.0 - 1.0) * pref2);

    let u = gt_vec_sym(&f.inv.view());
    let w = crate::linalg::kron(&f.inv.view(), &f.inv.view());
    let gwg = g_sandwich(&w.view(), p);
    let m = vech_len(p);
    let mut vech_block = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            vech_block[(i, j)] =
                0.25 * pref2 * (kap.kappa1 * gwg[(i, j)] + kap.kappa2 * u[i] * u[j]);
        }
    }
    Ok(KBeta {
        mu_block,
        vech_block,
    })
}

/// Inverse of the bracketed kernel J̄_{2β}(R₀⁻¹) + ξ̄_β(R₀⁻¹)ξ̄_βᵀ(R₀⁻¹):
/// κ₁⁻¹[(R₀ ⊗ R₀) − κ₃/(1 + pκ₃) vec(R₀)vecᵀ(R₀)].
pub fn corr_kernel_inverse(r0: &ArrayView2<f64>, kappa: &KappaSet) -> Array2<f64> {
    let p = r0.nrows();
    let mut out = crate::linalg::kron(r0, r0);
    let v = vec_of(r0);
    let corr = kappa.kappa3 / (1.0 + p as f64 * kappa.kappa3);
    let n2 = p * p;
    for i in 0..n2 {
        for j in 0..n2 {
            out[(i, j)] = (out[(i, j)] - corr * v[i] * v[j]) / kappa.kappa1;
        }
    }
    out
}

/// Full inverse of the vech(Σ) block of K_β at Σ = Λ^{1/2} R₀ Λ^{1/2}:
/// 4(2π)^{βp}|Λ|^β|R₀|^β · L_p (Λ^{1/2}⊗Λ^{1/2}) kernel⁻¹ (Λ^{1/2}⊗Λ^{1/2}) L_pᵀ
/// with kernel⁻¹ from [`corr_kernel_inverse`].
pub fn k_beta_corr_inverse(
    lambda: &ArrayView1<f64>,
    r0: &SymMatrix,
    beta: f64,
) -> Result<Array2<f64>> {
    check_beta(beta)?;
    let p = r0.dim();
    if lambda.len() != p {
        return Err(Error::Structure(format!(
            "lambda has length {}, correlation matrix has dimension {p}",
            lambda.len()
        )));
    }
    let kap = kappa_constants(p, beta)?;
    let lr = cholesky(&r0.view())?;
    let logdet_r = chol_logdet(&lr);
    let logdet_lambda: f64 = lambda.iter().map(|v| v.ln()).sum();
    // 4(2π)^{βp}|Λ|^β|R0|^β
    let scale = 4.0 * (beta * (p as f64 * LN_2PI + logdet_lambda + logdet_r)).exp();

    let mut kernel = corr_kernel_inverse(&r0.view(), &kap);
    // (Λ^{1/2}⊗Λ^{1/2}) is diagonal with entries σ_i σ_j at vec index (i, j)
    let sig: Vec<f64> = lambda.iter().map(|v| v.sqrt()).collect();
    let n2 = p * p;
    for a in 0..n2 {
        let (ia, ja) = (a % p, a / p);
        for b in 0..n2 {
            let (ib, jb) = (b % p, b / p);
            kernel[(a, b)] *= sig[ia] * sig[ja] * sig[ib] * sig[jb];
        }
    }
    Ok(l_sandwich(&kernel.view(), p).mapv(|v| v * scale))
}

/// Weighted scatter and correlation estimates at fixed (μ, Λ, R₀).
#[derive(Debug, Clone)]
pub struct WeightedScatter {
    /// S_{X,β} = (1/n) Σ w_i (X_i−μ)(X_i−μ)ᵀ / κ̃₀
    pub s_matrix: Array2<f64>,
    /// R_{X,β} = Λ^{−1/2} S_{X,β} Λ^{−1/2}
    pub r_matrix: Array2<f64>,
    /// κ̃₀ = mean weight − β(β+1)^{−(p/2+1)}
    pub kappa0_tilde: f64,
    /// Per-observation DPD weights.
    pub weights: Array1<f64>,
    /// Mean of the weights.
    pub weight_mean: f64,
}

/// Weighted scatter of `sample` around (μ, Λ) with weights computed under
/// Σ = Λ^{1/2} R₀ Λ^{1/2}. Fails with a degeneracy error when κ̃₀ ≤ 0
/// (all mass down-weighted: β too large for the sample).
pub fn weighted_scatter(
    sample: &Sample,
    mu: &ArrayView1<f64>,
    lambda: &ArrayView1<f64>,
    r0: &SymMatrix,
    beta: f64,
) -> Result<WeightedScatter> {
    check_beta(beta)?;
    let (n, p) = (sample.nrows(), sample.ncols());
    if n < 2 {
        return Err(Error::Data(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    if mu.len() != p || lambda.len() != p || r0.dim() != p {
        return Err(Error::Structure(format!(
            "dimension mismatch: sample has p = {p}, mu {}, lambda {}, R0 {}",
            mu.len(),
            lambda.len(),
            r0.dim()
        )));
    }
    let r0_inv = crate::linalg::spd_inverse(&r0.view())?;
    let kap = kappa_constants(p, beta)?;
    let sig: Vec<f64> = lambda.iter().map(|v| v.sqrt()).collect();

    let mut weights = Array1::<f64>::zeros(n);
    let mut std_rows = Array2::<f64>::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            std_rows[(i, j)] = (sample[(i, j)] - mu[j]) / sig[j];
        }
        let q = quad_form(&r0_inv.view(), &std_rows.row(i));
        weights[i] = (-0.5 * beta * q).exp();
    }
    let weight_mean = weights.sum() / n as f64;
    let kappa0_tilde = weight_mean - kap.xi_offset;
    if kappa0_tilde <= 0.0 {
        return Err(Error::Degeneracy(format!(
            "kappa0 = {kappa0_tilde:.3e} is not positive: all mass down-weighted \
             (beta = {beta} too large for this sample)"
        )));
    }

    let mut s = Array2::<f64>::zeros((p, p));
    for i in 0..n {
        let w = weights[i];
        for a in 0..p {
            let da = sample[(i, a)] - mu[a];
            for b in 0..=a {
                s[(a, b)] += w * da * (sample[(i, b)] - mu[b]);
            }
        }
    }
    let norm = 1.0 / (n as f64 * kappa0_tilde);
    for a in 0..p {
        for b in 0..=a {
            let v = s[(a, b)] * norm;
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    let mut r = s.clone();
    for a in 0..p {
        for b in 0..p {
            r[(a, b)] /= sig[a] * sig[b];
        }
    }
    Ok(WeightedScatter {
        s_matrix: s,
        r_matrix: r,
        kappa0_tilde,
        weights,
        weight_mean,
    })
}

/// The β-score estimating function U_{β,n}(θ) = (1/n) Σ s_θ(X_i)f_θ^β(X_i) − ξ_β(θ).
#[derive(Debug, Clone)]
pub struct UBeta {
    pub mu_block: Array1<f64>,
    pub vech_block: Array1<f64>,
}

/// Evaluate U_{β,n} at the given parameters.
pub fn u_beta_n(sample: &Sample, params: &GaussianParams, beta: f64) -> Result<UBeta> {
    check_beta(beta)?;
    let (n, p) = (sample.nrows(), sample.ncols());
    if p != params.dim() {
        return Err(Error::Structure(format!(
            "sample has p = {p}, parameters have dimension {}",
            params.dim()
        )));
    }
    let f = sigma_factors(params)?;
    let pref = beta_prefactor(p, beta, f.logdet);
    let kap = kappa_constants(p, beta)?;

    let mut wsum = 0.0;
    let mut wd = Array1::<f64>::zeros(p);
    let mut m2 = Array2::<f64>::zeros((p, p));
    for i in 0..n {
        let d = &sample.row(i) - params.mu();
        let q = quad_form(&f.inv.view(), &d.view());
        let w = (-0.5 * beta * q).exp();
        wsum += w;
        for a in 0..p {
            wd[a] += w * d[a];
            for b in 0..=a {
                m2[(a, b)] += w * d[a] * d[b];
            }
        }
    }
    let nf = n as f64;
    let wbar = wsum / nf;
    for a in 0..p {
        for b in 0..a {
            m2[(b, a)] = m2[(a, b)];
        }
    }
    m2.mapv_inplace(|v| v / nf);

    // μ block: (1/n) Σ w_i f-prefactor Σ⁻¹ d_i  (ξ_β(μ) = 0)
    let mu_block = f.inv.dot(&wd).mapv(|v| v * pref / nf);

    // vech block: ½·pref·Gᵀ[vec(Σ⁻¹ M₂ Σ⁻¹) − κ̃₀ vec(Σ⁻¹)]
    let inner = f.inv.dot(&m2).dot(&f.inv);
    let kappa0 = wbar - kap.xi_offset;
    let m = vech_len(p);
    let mut vech_block = Array1::<f64>::zeros(m);
    for j in 0..p {
        for i in j..p {
            let k = vech_index(p, i, j);
            let mult = if i == j { 0.5 } else { 1.0 };
            vech_block[k] = mult * pref * (inner[(i, j)] - kappa0 * f.inv[(i, j)]);
        }
    }
    Ok(UBeta {
        mu_block,
        vech_block,
    })
}

/// The correlation-form V of the β-score statistic at Σ̃ = Λ^{1/2} R₀ Λ^{1/2}:
///
/// V = −κ̃₀/(2(2π)^{βp/2}|Σ̃|^{β/2}) (Λ^{−1/2}⊗Λ^{−1/2})(R₀⁻¹⊗R₀⁻¹)[vec(R̃_{X,β}) − vec(R₀)]
///
/// returned as a p²-vector.
pub fn v_beta_n_corr(
    sample: &Sample,
    mu: &ArrayView1<f64>,
    lambda: &ArrayView1<f64>,
    r0: &SymMatrix,
    beta: f64,
) -> Result<Array1<f64>> {
    let p = r0.dim();
    let scatter = weighted_scatter(sample, mu, lambda, r0, beta)?;
    let r0_inv = crate::linalg::spd_inverse(&r0.view())?;
    let lr = cholesky(&r0.view())?;
    let logdet_sigma: f64 = chol_logdet(&lr) + lambda.iter().map(|v| v.ln()).sum::<f64>();
    let pref = beta_prefactor(p, beta, logdet_sigma);

    let delta = &scatter.r_matrix - r0.as_array();
    let core = r0_inv.dot(&delta).dot(&r0_inv);
    let sig_inv: Vec<f64> = lambda.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut out = Array1::<f64>::zeros(p * p);
    for j in 0..p {
        for i in 0..p {
            out[j * p + i] =
                -0.5 * scatter.kappa0_tilde * pref * sig_inv[i] * sig_inv[j] * core[(i, j)];
        }
    }
    Ok(out)
}

/// η-reparameterization helpers: the scaling D = diag{σ_iσ_j}_{i<j} and the
/// block extractors mapping vech(Σ)-space quantities into
/// (η₂,₁, η₂,₂) = (variances, correlations) coordinates.
#[derive(Debug, Clone)]
pub struct EtaBlocks {
    p: usize,
    /// D = diag{σ_iσ_j} over pairs i < j, in vecl order.
    pub d_scale: Array1<f64>,
}

impl EtaBlocks {
    /// P-block extractor: U(η₂,₁) = Pᵀ U(θ₂).
    pub fn u_eta21(&self, u_theta2: &ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check(u_theta2.len())?;
        let pos = variance_positions(self.p);
        Ok(Array1::from_iter(pos.iter().map(|&k| u_theta2[k])))
    }

    /// Q-block extractor with the η scaling: U(η₂,₂) = D Qᵀ U(θ₂).
    pub fn u_eta22(&self, u_theta2: &ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check(u_theta2.len())?;
        let pos = covariance_positions(self.p);
        Ok(Array1::from_iter(
            pos.iter()
                .enumerate()
                .map(|(s, &k)| self.d_scale[s] * u_theta2[k]),
        ))
    }

    /// Correlation block of K in η coordinates: K(η₂,₂) = D Qᵀ K(θ₂) Q D.
    pub fn k_eta22(&self, k_theta2: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(k_theta2.nrows())?;
        self.check(k_theta2.ncols())?;
        let pos = covariance_positions(self.p);
        let q = vecl_len(self.p);
        let mut out = Array2::<f64>::zeros((q, q));
        for a in 0..q {
            for b in 0..q {
                out[(a, b)] = self.d_scale[a] * k_theta2[(pos[a], pos[b])] * self.d_scale[b];
            }
        }
        Ok(out)
    }

    /// Middle matrix of the quadratic-form statistic:
    /// D⁻¹ Qᵀ K⁻¹(θ₂) Q D⁻¹, the (2,2) block of K⁻¹ in η coordinates.
    pub fn k_inverse_eta22(&self, k_inv_theta2: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(k_inv_theta2.nrows())?;
        self.check(k_inv_theta2.ncols())?;
        let pos = covariance_positions(self.p);
        let q = vecl_len(self.p);
        let mut out = Array2::<f64>::zeros((q, q));
        for a in 0..q {
            for b in 0..q {
                out[(a, b)] = k_inv_theta2[(pos[a], pos[b])] / (self.d_scale[a] * self.d_scale[b]);
            }
        }
        Ok(out)
    }

    fn check(&self, len: usize) -> Result<()> {
        let m = vech_len(self.p);
        if len != m {
            return Err(Error::Structure(format!(
                "expected vech-length {m}, got {len}"
            )));
        }
        Ok(())
    }
}

/// Build the η-block scaling from parameters; fails on nonpositive variances.
pub fn eta_blocks(params: &GaussianParams) -> Result<EtaBlocks> {
    let p = params.dim();
    let sig: Vec<f64> = params.lambda().iter().map(|v| v.sqrt()).collect();
    let d_scale = Array1::from_iter(lower_pairs(p).map(|(i, j)| sig[i] * sig[j]));
    Ok(EtaBlocks { p, d_scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{duplication_matrix, reorder_permutation};
    use ndarray::array;

    fn params_2d() -> GaussianParams {
        GaussianParams::new(
            array![0.5, -1.0],
            array![2.0, 0.5],
            SymMatrix::new(array![[1.0, 0.6], [0.6, 1.0]]).unwrap(),
        )
        .unwrap()
    }

    fn params_3d() -> GaussianParams {
        GaussianParams::new(
            array![0.0, 1.0, -0.5],
            array![1.0, 4.0, 9.0],
            SymMatrix::new(array![[1.0, 0.3, -0.2], [0.3, 1.0, 0.4], [-0.2, 0.4, 1.0]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn log_density_standard_normal_at_origin() {
        let p = GaussianParams::standard(1).unwrap();
        let got = log_density(&array![0.0].view(), &p).unwrap();
        assert!((got - (-0.5 * LN_2PI)).abs() < 1e-15);
    }

    #[test]
    fn log_density_at_mean_is_normalizer() {
        let p = params_3d();
        let sigma = p.covariance();
        let l = cholesky(&sigma.view()).unwrap();
        let expect = -1.5 * LN_2PI - 0.5 * chol_logdet(&l);
        let got = log_density(&p.mu().view(), &p).unwrap();
        assert!((got - expect).abs() < 1e-13);
    }

    #[test]
    fn log_density_matches_bivariate_closed_form() {
        let p = params_2d();
        let x = array![1.3, -0.4];
        // closed form with the explicit 2x2 inverse
        let (s1, s2, rho) = (2.0f64, 0.5f64, 0.6f64);
        let det = s1 * s2 * (1.0 - rho * rho);
        let d1 = x[0] - 0.5;
        let d2 = x[1] + 1.0;
        let q = (d1 * d1 / s1 - 2.0 * rho * d1 * d2 / (s1 * s2).sqrt() + d2 * d2 / s2)
            / (1.0 - rho * rho);
        let expect = -LN_2PI - 0.5 * det.ln() - 0.5 * q;
        let got = log_density(&x.view(), &p).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn dpd_weight_cases() {
        let p = params_2d();
        let x = array![2.0, 0.3];
        assert!((dpd_weight(&x.view(), &p, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((dpd_weight(&p.mu().view(), &p, 2.3).unwrap() - 1.0).abs() < 1e-15);
        // Mahalanobis distance² = 2 at β = 1 gives e^{−1}
        let std = GaussianParams::standard(2).unwrap();
        let y = array![2.0f64.sqrt(), 0.0];
        assert!((dpd_weight(&y.view(), &std, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-14);
        assert!(dpd_weight(&y.view(), &std, -0.1).is_err());
    }

    #[test]
    fn score_mu_cases() {
        let p = params_3d();
        let at_mean = score_mu(&p.mu().view(), &p).unwrap();
        assert!(at_mean.iter().all(|v| v.abs() < 1e-14));
        let std = GaussianParams::standard(3).unwrap();
        let x = array![0.4, -1.0, 2.0];
        let s = score_mu(&x.view(), &std).unwrap();
        for j in 0..3 {
            assert!((s[j] - x[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn score_vech_sigma_identity_case() {
        // x = μ, Σ = I: −1/2 on diagonal coordinates, 0 off-diagonal
        let std = GaussianParams::standard(3).unwrap();
        let s = score_vech_sigma(&std.mu().view(), &std).unwrap();
        for j in 0..3 {
            for i in j..3 {
                let k = vech_index(3, i, j);
                let expect = if i == j { -0.5 } else { 0.0 };
                assert!((s[k] - expect).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn score_vech_sigma_univariate_formula() {
        // p = 1: (x−μ)²/(2σ⁴) − 1/(2σ²)
        let p = GaussianParams::new(
            array![1.0],
            array![2.5],
            SymMatrix::new(array![[1.0]]).unwrap(),
        )
        .unwrap();
        let x = array![2.7];
        let s = score_vech_sigma(&x.view(), &p).unwrap();
        let d = 2.7 - 1.0;
        let expect = d * d / (2.0 * 2.5 * 2.5) - 1.0 / (2.0 * 2.5);
        assert!((s[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn kappa_constants_cases() {
        let k0 = kappa_constants(3, 0.0).unwrap();
        assert_eq!(k0.kappa1, 2.0);
        assert_eq!(k0.kappa2, 0.0);
        assert_eq!(k0.kappa3, 0.0);
        assert_eq!(k0.xi_offset, 0.0);
        // at p = 2, 2κ₁⁻¹ = (2β+1)³
        for &beta in &[0.1, 0.5, 1.0] {
            let k = kappa_constants(2, beta).unwrap();
            assert!((2.0 / k.kappa1 - (2.0 * beta + 1.0).powi(3)).abs() < 1e-12);
        }
        // unit weights at β = 0 make κ̃₀ = 1, so κ̃₀²κ₁⁻¹ = 1/2
        assert!((1.0 / k0.kappa1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn j_beta_classical_limits() {
        let p = params_2d();
        let j0 = j_beta(&p, 0.0).unwrap();
        let f = sigma_factors(&p).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((j0.mu_block[(a, b)] - f.inv[(a, b)]).abs() < 1e-13);
            }
        }
        // J₀(vech Σ) = ½ Gᵀ(Σ⁻¹⊗Σ⁻¹)G, assembled densely as an oracle
        let g = duplication_matrix(2).unwrap().dense().unwrap();
        let w = crate::linalg::kron(&f.inv.view(), &f.inv.view());
        let expect = g.t().dot(&w).dot(&g).mapv(|v| 0.5 * v);
        for a in 0..3 {
            for b in 0..3 {
                assert!((j0.vech_block[(a, b)] - expect[(a, b)]).abs() < 1e-12);
            }
        }
        // p = 1, σ² = 1, β = 0: J = diag(1, 1/2)
        let std1 = GaussianParams::standard(1).unwrap();
        let j = j_beta(&std1, 0.0).unwrap();
        assert!((j.mu_block[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((j.vech_block[(0, 0)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn xi_beta_structure() {
        let p = params_3d();
        let xi0 = xi_beta(&p, 0.0).unwrap();
        assert!(xi0.vech_block.iter().all(|v| v.abs() < 1e-15));
        let xi = xi_beta(&p, 0.7).unwrap();
        let full = xi.full();
        for j in 0..3 {
            assert_eq!(full[j], 0.0);
        }
        // direct formula check of one coordinate
        let f = sigma_factors(&p).unwrap();
        let pref = beta_prefactor(3, 0.7, f.logdet);
        let scale = -0.5 * 0.7 * (1.7f64).powf(-(1.5 + 1.0)) * pref;
        let expect = scale * f.inv[(0, 0)];
        assert!((xi.vech_block[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn k_beta_is_j2beta_minus_xi_outer() {
        let p = params_3d();
        for &beta in &[0.0, 0.4, 1.0] {
            let k = k_beta(&p, beta).unwrap();
            let j2 = j_beta(&p, 2.0 * beta).unwrap();
            let xi = xi_beta(&p, beta).unwrap();
            let outer = xi.outer_vech();
            for a in 0..2 {
                for b in 0..2 {
                    assert!(
                        (k.mu_block[(a, b)] - j2.mu_block[(a, b)]).abs() < 1e-12,
                        "mu block beta={beta}"
                    );
                }
            }
            let m = k.vech_block.nrows();
            for a in 0..m {
                for b in 0..m {
                    let expect = j2.vech_block[(a, b)] - outer[(a, b)];
                    assert!(
                        (k.vech_block[(a, b)] - expect).abs() < 1e-12,
                        "vech block beta={beta} ({a},{b})"
                    );
                }
            }
        }
    }

    #[test]
    fn kernel_inverse_identity() {
        // [κ₁(R₀⁻¹⊗R₀⁻¹) + κ₂ vec(R₀⁻¹)vecᵀ(R₀⁻¹)] · kernel_inverse = I
        for p in 2..=4 {
            let r0 = crate::matrix::equicorr_matrix(0.3, p).unwrap();
            let r0_inv = crate::linalg::spd_inverse(&r0.view()).unwrap();
            for &beta in &[0.0, 0.3, 1.0] {
                let kap = kappa_constants(p, beta).unwrap();
                let inv = corr_kernel_inverse(&r0.view(), &kap);
                let mut kernel =
                    crate::linalg::kron(&r0_inv.view(), &r0_inv.view()).mapv(|v| v * kap.kappa1);
                let v = vec_of(&r0_inv.view());
                let n2 = p * p;
                for a in 0..n2 {
                    for b in 0..n2 {
                        kernel[(a, b)] += kap.kappa2 * v[a] * v[b];
                    }
                }
                let prod = kernel.dot(&inv);
                for a in 0..n2 {
                    for b in 0..n2 {
                        let e = if a == b { 1.0 } else { 0.0 };
                        assert!(
                            (prod[(a, b)] - e).abs() < 1e-10,
                            "p={p} beta={beta} ({a},{b}): {}",
                            prod[(a, b)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_inverse_classical_limit() {
        // β = 0: κ₃ = 0 so the kernel inverse is κ₁⁻¹(R₀⊗R₀)
        let r0 = crate::matrix::equicorr_matrix(0.25, 3).unwrap();
        let kap = kappa_constants(3, 0.0).unwrap();
        let inv = corr_kernel_inverse(&r0.view(), &kap);
        let expect = crate::linalg::kron(&r0.view(), &r0.view()).mapv(|v| v / kap.kappa1);
        for a in 0..9 {
            for b in 0..9 {
                assert!((inv[(a, b)] - expect[(a, b)]).abs() < 1e-14);
            }
        }
        // and K₀(μ) = Σ⁻¹
        let p = params_2d();
        let k = k_beta(&p, 0.0).unwrap();
        let f = sigma_factors(&p).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((k.mu_block[(a, b)] - f.inv[(a, b)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn k_corr_inverse_inverts_k_vech_block() {
        let lambda = array![1.5, 0.7, 3.0];
        let r0 = SymMatrix::new(array![
            [1.0, 0.2, -0.1],
            [0.2, 1.0, 0.35],
            [-0.1, 0.35, 1.0]
        ])
        .unwrap();
        let params =
            GaussianParams::new(array![0.0, 0.0, 0.0], lambda.clone(), r0.clone()).unwrap();
        for &beta in &[0.0, 0.3, 0.8] {
            let k = k_beta(&params, beta).unwrap();
            let k_inv = k_beta_corr_inverse(&lambda.view(), &r0, beta).unwrap();
            let prod = k.vech_block.dot(&k_inv);
            for a in 0..6 {
                for b in 0..6 {
                    let e = if a == b { 1.0 } else { 0.0 };
                    assert!(
                        (prod[(a, b)] - e).abs() < 1e-9,
                        "beta={beta} ({a},{b}): {}",
                        prod[(a, b)]
                    );
                }
            }
        }
    }

    #[test]
    fn weighted_scatter_classical_case() {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        use rand_distr::StandardNormal;
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let x = Array2::from_shape_fn((60, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let n = 60.0;
        let mut mean = Array1::<f64>::zeros(3);
        for j in 0..3 {
            mean[j] = x.column(j).sum() / n;
        }
        let mut var = Array1::<f64>::zeros(3);
        for j in 0..3 {
            var[j] = x
                .column(j)
                .iter()
                .map(|v| (v - mean[j]) * (v - mean[j]))
                .sum::<f64>()
                / n;
        }
        let r0 = SymMatrix::new(array![[1.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.0]]).unwrap();
        let sc = weighted_scatter(&x, &mean.view(), &var.view(), &r0, 0.0).unwrap();
        assert!((sc.kappa0_tilde - 1.0).abs() < 1e-14);
        assert!(sc.weights.iter().all(|&w| (w - 1.0).abs() < 1e-15));
        let pearson = crate::estimators::pearson_correlation(&x);
        for a in 0..3 {
            for b in 0..3 {
                assert!(
                    (sc.r_matrix[(a, b)] - pearson[(a, b)]).abs() < 1e-12,
                    "({a},{b})"
                );
            }
        }
    }

    #[test]
    fn weighted_scatter_degenerate_cases() {
        // duplicated observation exactly at μ: unit weights, zero scatter
        let x = Array2::from_elem((2, 2), 1.5);
        let mu = array![1.5, 1.5];
        let lambda = array![1.0, 1.0];
        let r0 = SymMatrix::new(Array2::eye(2)).unwrap();
        let sc = weighted_scatter(&x, &mu.view(), &lambda.view(), &r0, 0.8).unwrap();
        assert!(sc.weights.iter().all(|&w| (w - 1.0).abs() < 1e-15));
        assert!(sc.s_matrix.iter().all(|&v| v == 0.0));

        // far-off data at large β: κ̃₀ ≤ 0
        let y = Array2::from_shape_fn((4, 1), |(i, _)| 100.0 + i as f64);
        let mu1 = array![0.0];
        let l1 = array![1.0];
        let r1 = SymMatrix::new(Array2::eye(1)).unwrap();
        assert!(matches!(
            weighted_scatter(&y, &mu1.view(), &l1.view(), &r1, 1.0),
            Err(Error::Degeneracy(_))
        ));
    }

    #[test]
    fn u_beta_mu_block_vanishes_at_weighted_mean() {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        use rand_distr::StandardNormal;
        let mut rng = ChaCha12Rng::seed_from_u64(321);
        let x = Array2::from_shape_fn((40, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let n = 40.0;
        let mut mean = Array1::<f64>::zeros(2);
        for j in 0..2 {
            mean[j] = x.column(j).sum() / n;
        }
        let params = GaussianParams::new(
            mean,
            array![1.0, 1.0],
            SymMatrix::new(Array2::eye(2)).unwrap(),
        )
        .unwrap();
        let u = u_beta_n(&x, &params, 0.0).unwrap();
        assert!(u.mu_block.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn u_vech_block_is_minus_g_transpose_v() {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        use rand_distr::StandardNormal;
        let mut rng = ChaCha12Rng::seed_from_u64(919);
        let x = Array2::from_shape_fn((50, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let mu = array![0.1, -0.2, 0.05];
        let lambda = array![1.1, 0.9, 1.3];
        let r0 = SymMatrix::new(array![
            [1.0, 0.25, 0.0],
            [0.25, 1.0, -0.15],
            [0.0, -0.15, 1.0]
        ])
        .unwrap();
        let beta = 0.35;
        let params = GaussianParams::new(mu.clone(), lambda.clone(), r0.clone()).unwrap();
        let u = u_beta_n(&x, &params, beta).unwrap();
        let v = v_beta_n_corr(&x, &mu.view(), &lambda.view(), &r0, beta).unwrap();
        let gtv = duplication_matrix(3).unwrap().apply_transpose(&v).unwrap();
        for k in 0..6 {
            assert!(
                (u.vech_block[k] + gtv[k]).abs() < 1e-12,
                "coordinate {k}: {} vs {}",
                u.vech_block[k],
                -gtv[k]
            );
        }
    }

    #[test]
    fn v_corr_equals_raw_sum_form() {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        use rand_distr::StandardNormal;
        let mut rng = ChaCha12Rng::seed_from_u64(555);
        let x = Array2::from_shape_fn((35, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let mu = array![0.2, -0.1];
        let lambda = array![1.4, 0.8];
        let r0 = SymMatrix::new(array![[1.0, 0.45], [0.45, 1.0]]).unwrap();
        let beta = 0.5;
        let v = v_beta_n_corr(&x, &mu.view(), &lambda.view(), &r0, beta).unwrap();

        // raw-sums form: −c [ (1/n)Σ wᵢ (Σ⁻¹dᵢ)⊗(Σ⁻¹dᵢ) − κ̃₀ vec(Σ⁻¹) ]
        let params = GaussianParams::new(mu.clone(), lambda.clone(), r0.clone()).unwrap();
        let sigma = params.covariance();
        let l = cholesky(&sigma.view()).unwrap();
        let sigma_inv = chol_inverse(&l);
        let pref = beta_prefactor(2, beta, chol_logdet(&l));
        let kap = kappa_constants(2, beta).unwrap();
        let n = 35.0;
        let mut a_vec = Array1::<f64>::zeros(4);
        let mut wbar = 0.0;
        for i in 0..35 {
            let d = &x.row(i) - &mu;
            let sd = sigma_inv.dot(&d);
            let q = d.dot(&sd);
            let w = (-0.5 * beta * q).exp();
            wbar += w / n;
            for jj in 0..2 {
                for ii in 0..2 {
                    a_vec[jj * 2 + ii] += w * sd[ii] * sd[jj] / n;
                }
            }
        }
        let kappa0 = wbar - kap.xi_offset;
        let vs = vec_of(&sigma_inv.view());
        for k in 0..4 {
            let direct = -0.5 * pref * (a_vec[k] - kappa0 * vs[k]);
            assert!(
                (v[k] - direct).abs() < 1e-12,
                "coordinate {k}: {} vs {direct}",
                v[k]
            );
        }
    }

    #[test]
    fn eta_scaling_examples() {
        let p2 = GaussianParams::standard(2).unwrap();
        let eta2 = eta_blocks(&p2).unwrap();
        assert_eq!(eta2.d_scale.len(), 1);
        assert!((eta2.d_scale[0] - 1.0).abs() < 1e-15);

        let p3 = GaussianParams::new(
            array![0.0, 0.0, 0.0],
            array![1.0, 4.0, 9.0],
            SymMatrix::new(Array2::eye(3)).unwrap(),
        )
        .unwrap();
        let eta3 = eta_blocks(&p3).unwrap();
        // pairs (1,2), (1,3), (2,3): σᵢσⱼ = 2, 3, 6
        assert_eq!(eta3.d_scale.len(), 3);
        assert!((eta3.d_scale[0] - 2.0).abs() < 1e-15);
        assert!((eta3.d_scale[1] - 3.0).abs() < 1e-15);
        assert!((eta3.d_scale[2] - 6.0).abs() < 1e-15);
    }

    #[test]
    fn eta_blocks_consistent_with_permutation() {
        // stacking the P- and Q-extractions recovers Mᵀ ordering
        let p3 = params_3d();
        let eta = eta_blocks(&p3).unwrap();
        let u = Array1::from_iter((0..6).map(|k| (k as f64 + 1.0) * 0.1));
        let u21 = eta.u_eta21(&u.view()).unwrap();
        let u22_unscaled: Vec<f64> = {
            let pos = crate::matrix::covariance_positions(3);
            pos.iter().map(|&k| u[k]).collect()
        };
        let m = reorder_permutation(3).unwrap();
        let mt_u = m.apply_transpose(&u).unwrap();
        for j in 0..3 {
            assert_eq!(u21[j], mt_u[j]);
        }
        for s in 0..3 {
            assert_eq!(u22_unscaled[s], mt_u[3 + s]);
        }
        // and the scaled Q extraction is D·(Qᵀu)
        let u22 = eta.u_eta22(&u.view()).unwrap();
        for s in 0..3 {
            assert!((u22[s] - eta.d_scale[s] * u22_unscaled[s]).abs() < 1e-15);
        }
    }
}
