//! Shared helpers for the integration and acceptance suites: random
//! parameter generators, finite-difference score oracles, brute-force
//! quadrature of the information-matrix expectations, an independent dense
//! inverse, and exact-correlation sample construction.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use rao_beta_score::gaussian::{log_density, score_mu, score_vech_sigma, GaussianParams};
use rao_beta_score::matrix::{vech_index, vech_len, SymMatrix};
use rao_beta_score::Sample;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn standard_sample(n: usize, p: usize, seed: u64) -> Sample {
    let mut r = rng(seed);
    Array2::from_shape_fn((n, p), |_| r.sample::<f64, _>(StandardNormal))
}

/// A random well-conditioned correlation matrix: normalize A Aᵀ + p·I.
pub fn random_corr(p: usize, r: &mut ChaCha12Rng) -> Array2<f64> {
    let a = Array2::from_shape_fn((p, p), |_| r.sample::<f64, _>(StandardNormal));
    let mut s = a.dot(&a.t());
    for i in 0..p {
        s[(i, i)] += p as f64;
    }
    let d: Vec<f64> = (0..p).map(|i| s[(i, i)].sqrt()).collect();
    for i in 0..p {
        for j in 0..p {
            s[(i, j)] /= d[i] * d[j];
        }
        s[(i, i)] = 1.0;
    }
    s
}

pub fn random_params(p: usize, r: &mut ChaCha12Rng) -> GaussianParams {
    let mu = Array1::from_shape_fn(p, |_| 2.0 * r.random::<f64>() - 1.0);
    let lambda = Array1::from_shape_fn(p, |_| 0.3 + 2.7 * r.random::<f64>());
    let corr = SymMatrix::new(random_corr(p, r)).unwrap();
    GaussianParams::new(mu, lambda, corr).unwrap()
}

/// A point a couple of standard deviations out from the mean.
pub fn random_point(params: &GaussianParams, r: &mut ChaCha12Rng) -> Array1<f64> {
    let p = params.dim();
    Array1::from_shape_fn(p, |j| {
        params.mu()[j] + 2.0 * params.lambda()[j].sqrt() * (2.0 * r.random::<f64>() - 1.0)
    })
}

/// Central finite differences of log f in μ, step 1e−5 × σ_j.
pub fn fd_score_mu(x: &Array1<f64>, params: &GaussianParams) -> Array1<f64> {
    let p = params.dim();
    let corr = SymMatrix::new(params.corr().clone()).unwrap();
    Array1::from_shape_fn(p, |j| {
        let h = 1e-5 * params.lambda()[j].sqrt();
        let mut mu_hi = params.mu().clone();
        mu_hi[j] += h;
        let mut mu_lo = params.mu().clone();
        mu_lo[j] -= h;
        let hi = GaussianParams::new(mu_hi, params.lambda().clone(), corr.clone()).unwrap();
        let lo = GaussianParams::new(mu_lo, params.lambda().clone(), corr.clone()).unwrap();
        (log_density(&x.view(), &hi).unwrap() - log_density(&x.view(), &lo).unwrap()) / (2.0 * h)
    })
}

/// Central finite differences of log f in vech(Σ), perturbing symmetric
/// pairs jointly, step 1e−5 × σ_iσ_j.
pub fn fd_score_vech(x: &Array1<f64>, params: &GaussianParams) -> Array1<f64> {
    let p = params.dim();
    let sigma = params.covariance();
    let mut out = Array1::<f64>::zeros(vech_len(p));
    for j in 0..p {
        for i in j..p {
            let h = 1e-5 * (params.lambda()[i] * params.lambda()[j]).sqrt();
            let mut hi = sigma.clone();
            let mut lo = sigma.clone();
            hi[(i, j)] += h;
            lo[(i, j)] -= h;
            if i != j {
                hi[(j, i)] += h;
                lo[(j, i)] -= h;
            }
            let phi =
                GaussianParams::from_covariance(params.mu().clone(), SymMatrix::new(hi).unwrap())
                    .unwrap();
            let plo =
                GaussianParams::from_covariance(params.mu().clone(), SymMatrix::new(lo).unwrap())
                    .unwrap();
            out[vech_index(p, i, j)] = (log_density(&x.view(), &phi).unwrap()
                - log_density(&x.view(), &plo).unwrap())
                / (2.0 * h);
        }
    }
    out
}

/// Full score vector (μ block then vech block) at x.
pub fn full_score(x: &Array1<f64>, params: &GaussianParams) -> Array1<f64> {
    let smu = score_mu(&x.view(), params).unwrap();
    let svech = score_vech_sigma(&x.view(), params).unwrap();
    let mut out = Array1::<f64>::zeros(smu.len() + svech.len());
    for (k, v) in smu.iter().chain(svech.iter()).enumerate() {
        out[k] = *v;
    }
    out
}

/// Composite-Simpson quadrature of ∫ s sᵀ f^γ and ∫ s f^γ for p = 1.
pub fn quad_moments_p1(
    params: &GaussianParams,
    gamma: f64,
    points: usize,
) -> (Array2<f64>, Array1<f64>) {
    assert_eq!(params.dim(), 1);
    let sigma_e = (params.lambda()[0] / gamma).sqrt();
    let (a, b) = (
        params.mu()[0] - 14.0 * sigma_e,
        params.mu()[0] + 14.0 * sigma_e,
    );
    let m = points | 1; // Simpson needs an odd point count
    let h = (b - a) / (m - 1) as f64;
    let dim = 2;
    let mut mm = Array2::<f64>::zeros((dim, dim));
    let mut mv = Array1::<f64>::zeros(dim);
    for k in 0..m {
        let xk = a + h * k as f64;
        let w = simpson_weight(k, m) * h / 3.0;
        let x = ndarray::array![xk];
        let s = full_score(&x, params);
        let f = (gamma * log_density(&x.view(), params).unwrap()).exp();
        for i in 0..dim {
            mv[i] += w * s[i] * f;
            for j in 0..dim {
                mm[(i, j)] += w * s[i] * s[j] * f;
            }
        }
    }
    (mm, mv)
}

/// Tensor-Simpson quadrature of ∫ s sᵀ f^γ and ∫ s f^γ for p = 2.
pub fn quad_moments_p2(
    params: &GaussianParams,
    gamma: f64,
    points: usize,
) -> (Array2<f64>, Array1<f64>) {
    assert_eq!(params.dim(), 2);
    let m = points | 1; // Simpson needs an odd point count
    let se: Vec<f64> = (0..2)
        .map(|j| (params.lambda()[j] / gamma).sqrt())
        .collect();
    let lo: Vec<f64> = (0..2).map(|j| params.mu()[j] - 12.0 * se[j]).collect();
    let hi: Vec<f64> = (0..2).map(|j| params.mu()[j] + 12.0 * se[j]).collect();
    let h: Vec<f64> = (0..2).map(|j| (hi[j] - lo[j]) / (m - 1) as f64).collect();
    let dim = 5;
    let mut mm = Array2::<f64>::zeros((dim, dim));
    let mut mv = Array1::<f64>::zeros(dim);
    for k1 in 0..m {
        let w1 = simpson_weight(k1, m) * h[0] / 3.0;
        let x1 = lo[0] + h[0] * k1 as f64;
        for k2 in 0..m {
            let w = w1 * simpson_weight(k2, m) * h[1] / 3.0;
            let x = ndarray::array![x1, lo[1] + h[1] * k2 as f64];
            let s = full_score(&x, params);
            let f = (gamma * log_density(&x.view(), params).unwrap()).exp();
            for i in 0..dim {
                mv[i] += w * s[i] * f;
                for j in 0..=i {
                    mm[(i, j)] += w * s[i] * s[j] * f;
                }
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            mm[(j, i)] = mm[(i, j)];
        }
    }
    (mm, mv)
}

fn simpson_weight(k: usize, m: usize) -> f64 {
    if k == 0 || k == m - 1 {
        1.0
    } else if k % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting, as an
/// oracle independent of the crate's Cholesky path.
pub fn gauss_jordan_inverse(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if m[(r, col)].abs() > m[(piv, col)].abs() {
                piv = r;
            }
        }
        if piv != col {
            for c in 0..n {
                m.swap((col, c), (piv, c));
                inv.swap((col, c), (piv, c));
            }
        }
        let d = m[(col, col)];
        assert!(d.abs() > 1e-300, "singular matrix in oracle inverse");
        for c in 0..n {
            m[(col, c)] /= d;
            inv[(col, c)] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[(r, col)];
                if f != 0.0 {
                    for c in 0..n {
                        m[(r, c)] -= f * m[(col, c)];
                        inv[(r, c)] -= f * inv[(col, c)];
                    }
                }
            }
        }
    }
    inv
}

/// Recolor a raw normal sample so its Pearson correlation matrix equals
/// `target` up to floating point.
pub fn sample_with_exact_correlation(n: usize, target: &Array2<f64>, seed: u64) -> Sample {
    let p = target.nrows();
    let z = standard_sample(n, p, seed);
    let nf = n as f64;
    let mut mean = Array1::<f64>::zeros(p);
    for j in 0..p {
        mean[j] = z.column(j).sum() / nf;
    }
    let centered = &z - &mean.broadcast((n, p)).unwrap();
    let cov = centered.t().dot(&centered) / nf;
    let lw = lower_cholesky(&cov);
    let mut white = Array2::<f64>::zeros((n, p));
    for i in 0..n {
        let mut y = centered.row(i).to_owned();
        for a in 0..p {
            for b in 0..a {
                let t = lw[(a, b)] * y[b];
                y[a] -= t;
            }
            y[a] /= lw[(a, a)];
        }
        white.row_mut(i).assign(&y);
    }
    let lt = lower_cholesky(target);
    white.dot(&lt.t())
}

/// Plain Cholesky, kept local so the oracle does not depend on crate
/// internals.
pub fn lower_cholesky(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        assert!(d > 0.0, "matrix not positive definite in oracle Cholesky");
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
    l
}

/// χ² quantile by bisection on the crate CDF.
pub fn chi2_quantile(u: f64, df: usize) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1000.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rao_beta_score::score_tests::chi_square_cdf(mid, df).unwrap() < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Pearson correlation with n-denominator variances (oracle-local copy).
pub fn pearson(sample: &Sample) -> Array2<f64> {
    let (n, p) = (sample.nrows(), sample.ncols());
    let nf = n as f64;
    let mut mean = Array1::<f64>::zeros(p);
    for j in 0..p {
        mean[j] = sample.column(j).sum() / nf;
    }
    let mut cov = Array2::<f64>::zeros((p, p));
    for a in 0..p {
        for b in 0..=a {
            let mut s = 0.0;
            for i in 0..n {
                s += (sample[(i, a)] - mean[a]) * (sample[(i, b)] - mean[b]);
            }
            cov[(a, b)] = s / nf;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    let sd: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    let mut r = cov;
    for a in 0..p {
        for b in 0..p {
            r[(a, b)] /= sd[a] * sd[b];
        }
        r[(a, a)] = 1.0;
    }
    r
}
