//! Reproducible Monte-Carlo engine: multivariate normal, contaminated and
//! heavy-tailed samplers, and a size/power harness over (test, β) grids
//! with χ² calibration diagnostics.
//!
//! Reproducibility contract: replication r draws from ChaCha streams that
//! are a pure function of (root seed, r), so results are bit-identical for
//! a fixed seed regardless of how many worker threads execute the
//! replications. Aggregation is a deterministic fold in replication order.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::FitConfig;
use crate::gaussian::GaussianParams;
use crate::linalg::cholesky;
use crate::matrix::{check_equicorr_rho, SymMatrix};
use crate::score_tests::{
    bartlett_lrt_independence, chi_square_cdf, test_equicorr_fixed, test_equicorr_free,
    test_independence, test_specified_correlation, TestKind, TestReport,
};
use crate::Sample;

/// Stream channels carved out of each replication's seed space.
const CHANNEL_CLEAN: u64 = 0;
const CHANNEL_SELECT: u64 = 1;
const CHANNEL_CONTAMINANT: u64 = 2;
const CHANNEL_SCALE: u64 = 3;
const CHANNELS: u64 = 4;

fn stream_rng(seed: u64, replication: u64, channel: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(replication.wrapping_mul(CHANNELS).wrapping_add(channel));
    rng
}

/// How a contaminating observation is produced from the clean parameters.
#[derive(Debug, Clone)]
pub enum Contaminant {
    /// N(μ + shift, Σ).
    LocationShift(Array1<f64>),
    /// N(μ, factor²·Σ), factor > 0.
    ScaleInflation(f64),
    /// A deterministic point mass.
    PointMass(Array1<f64>),
}

/// Mixture: each row is contaminating with probability ε, clean otherwise.
#[derive(Debug, Clone)]
pub struct ContaminatedSpec {
    pub epsilon: f64,
    pub clean: GaussianParams,
    pub contaminant: Contaminant,
}

impl ContaminatedSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(Error::Domain(format!(
                "mixture weight must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        let p = self.clean.dim();
        match &self.contaminant {
            Contaminant::LocationShift(s) | Contaminant::PointMass(s) => {
                if s.len() != p {
                    return Err(Error::Structure(format!(
                        "contaminant vector has length {}, clean parameters have dimension {p}",
                        s.len()
                    )));
                }
            }
            Contaminant::ScaleInflation(f) => {
                if !(*f > 0.0) {
                    return Err(Error::Domain(format!(
                        "scale inflation factor must be positive, got {f}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Data-generating process for one scenario.
#[derive(Debug, Clone)]
pub enum Generator {
    PureGaussian(GaussianParams),
    Contaminated(ContaminatedSpec),
    /// Scale mixture of normals (multivariate t): each row's deviation is
    /// multiplied by sqrt(dof / χ²_dof); smaller dof means heavier tails.
    HeavyTailed {
        params: GaussianParams,
        dof: f64,
    },
}

impl Generator {
    pub fn dim(&self) -> usize {
        match self {
            Generator::PureGaussian(p) => p.dim(),
            Generator::Contaminated(c) => c.clean.dim(),
            Generator::HeavyTailed { params, .. } => params.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Generator::PureGaussian(_) => Ok(()),
            Generator::Contaminated(c) => c.validate(),
            Generator::HeavyTailed { dof, .. } => {
                if !(*dof > 0.0) {
                    return Err(Error::Domain(format!(
                        "heavy-tail scale-mixture factor must be positive, got {dof}"
                    )));
                }
                Ok(())
            }
        }
    }
}

fn mvn_rows(n: usize, mu: &Array1<f64>, chol_lower: &Array2<f64>, rng: &mut ChaCha12Rng) -> Sample {
    let p = mu.len();
    let mut out = Array2::<f64>::zeros((n, p));
    let mut z = vec![0.0; p];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        for a in 0..p {
            let mut acc = mu[a];
            for b in 0..=a {
                acc += chol_lower[(a, b)] * z[b];
            }
            out[(i, a)] = acc;
        }
    }
    out
}

/// n i.i.d. draws from N_p(μ, Σ) via X = μ + L z with L the Cholesky
/// factor of Σ; deterministic for a fixed seed.
pub fn sample_mvn(n: usize, params: &GaussianParams, seed: u64) -> Result<Sample> {
    let sigma = params.covariance();
    let l = cholesky(&sigma.view())?;
    let mut rng = stream_rng(seed, 0, CHANNEL_CLEAN);
    Ok(mvn_rows(n, params.mu(), &l, &mut rng))
}

/// Contaminated sample: each row is drawn from the contaminating component
/// with probability ε, from the clean component otherwise. The mixture
/// selector consumes its own random stream, so ε = 0 reproduces
/// [`sample_mvn`] bit for bit under the same seed.
pub fn sample_contaminated(n: usize, spec: &ContaminatedSpec, seed: u64) -> Result<Sample> {
    spec.validate()?;
    sample_contaminated_rep(n, spec, seed, 0)
}

fn sample_contaminated_rep(
    n: usize,
    spec: &ContaminatedSpec,
    seed: u64,
    replication: u64,
) -> Result<Sample> {
    let p = spec.clean.dim();
    let sigma = spec.clean.covariance();
    let l = cholesky(&sigma.view())?;
    let mut clean_rng = stream_rng(seed, replication, CHANNEL_CLEAN);
    let mut select_rng = stream_rng(seed, replication, CHANNEL_SELECT);
    let mut contam_rng = stream_rng(seed, replication, CHANNEL_CONTAMINANT);

    let mut out = Array2::<f64>::zeros((n, p));
    let mut z = vec![0.0; p];
    for i in 0..n {
        let contaminated = select_rng.random::<f64>() < spec.epsilon;
        if contaminated {
            match &spec.contaminant {
                Contaminant::PointMass(point) => {
                    for a in 0..p {
                        out[(i, a)] = point[a];
                    }
                }
                Contaminant::LocationShift(shift) => {
                    for zj in z.iter_mut() {
                        *zj = contam_rng.sample(StandardNormal);
                    }
                    for a in 0..p {
                        let mut acc = spec.clean.mu()[a] + shift[a];
                        for b in 0..=a {
                            acc += l[(a, b)] * z[b];
                        }
                        out[(i, a)] = acc;
                    }
                }
                Contaminant::ScaleInflation(factor) => {
                    for zj in z.iter_mut() {
                        *zj = contam_rng.sample(StandardNormal);
                    }
                    for a in 0..p {
                        let mut acc = spec.clean.mu()[a];
                        for b in 0..=a {
                            acc += factor * l[(a, b)] * z[b];
                        }
                        out[(i, a)] = acc;
                    }
                }
            }
        } else {
            for zj in z.iter_mut() {
                *zj = clean_rng.sample(StandardNormal);
            }
            for a in 0..p {
                let mut acc = spec.clean.mu()[a];
                for b in 0..=a {
                    acc += l[(a, b)] * z[b];
                }
                out[(i, a)] = acc;
            }
        }
    }
    Ok(out)
}

/// Heavy-tailed scale mixture (multivariate t with `dof` degrees of
/// freedom): X = μ + s·Lz with s = sqrt(dof/χ²_dof) per row.
pub fn sample_heavy_tailed(
    n: usize,
    params: &GaussianParams,
    dof: f64,
    seed: u64,
) -> Result<Sample> {
    Generator::HeavyTailed {
        params: params.clone(),
        dof,
    }
    .validate()?;
    sample_heavy_tailed_rep(n, params, dof, seed, 0)
}

fn sample_heavy_tailed_rep(
    n: usize,
    params: &GaussianParams,
    dof: f64,
    seed: u64,
    replication: u64,
) -> Result<Sample> {
    let p = params.dim();
    let sigma = params.covariance();
    let l = cholesky(&sigma.view())?;
    let mut clean_rng = stream_rng(seed, replication, CHANNEL_CLEAN);
    let mut scale_rng = stream_rng(seed, replication, CHANNEL_SCALE);
    let gamma = Gamma::new(dof / 2.0, 2.0)
        .map_err(|e| Error::Domain(format!("invalid scale-mixture factor {dof}: {e}")))?;

    let mut out = Array2::<f64>::zeros((n, p));
    let mut z = vec![0.0; p];
    for i in 0..n {
        let chi2: f64 = scale_rng.sample(gamma);
        let s = (dof / chi2.max(1e-300)).sqrt();
        for zj in z.iter_mut() {
            *zj = clean_rng.sample(StandardNormal);
        }
        for a in 0..p {
            let mut acc = params.mu()[a];
            for b in 0..=a {
                acc += s * l[(a, b)] * z[b];
            }
            out[(i, a)] = acc;
        }
    }
    Ok(out)
}

/// Draw the sample for one replication of a scenario.
pub fn sample_generator(
    generator: &Generator,
    n: usize,
    seed: u64,
    replication: u64,
) -> Result<Sample> {
    match generator {
        Generator::PureGaussian(params) => {
            let sigma = params.covariance();
            let l = cholesky(&sigma.view())?;
            let mut rng = stream_rng(seed, replication, CHANNEL_CLEAN);
            Ok(mvn_rows(n, params.mu(), &l, &mut rng))
        }
        Generator::Contaminated(spec) => sample_contaminated_rep(n, spec, seed, replication),
        Generator::HeavyTailed { params, dof } => {
            sample_heavy_tailed_rep(n, params, *dof, seed, replication)
        }
    }
}

/// A null hypothesis to test within a scenario.
#[derive(Debug, Clone)]
pub enum NullHypothesis {
    Independence,
    EquicorrFree,
    EquicorrFixed { rho0: f64 },
    SpecifiedR { r0: SymMatrix },
    Bartlett,
}

impl NullHypothesis {
    fn kind(&self) -> TestKind {
        match self {
            NullHypothesis::Independence => TestKind::Independence,
            NullHypothesis::EquicorrFree => TestKind::EquicorrFree,
            NullHypothesis::EquicorrFixed { .. } => TestKind::EquicorrFixed,
            NullHypothesis::SpecifiedR { .. } => TestKind::SpecifiedR,
            NullHypothesis::Bartlett => TestKind::BartlettLrt,
        }
    }

    /// β is meaningless for the Bartlett baseline.
    fn beta_dependent(&self) -> bool {
        !matches!(self, NullHypothesis::Bartlett)
    }

    fn run(&self, sample: &Sample, beta: f64, cfg: &FitConfig) -> Result<TestReport> {
        match self {
            NullHypothesis::Independence => test_independence(sample, beta, cfg),
            NullHypothesis::EquicorrFree => test_equicorr_free(sample, beta, cfg),
            NullHypothesis::EquicorrFixed { rho0 } => test_equicorr_fixed(sample, *rho0, beta, cfg),
            NullHypothesis::SpecifiedR { r0 } => test_specified_correlation(sample, r0, beta, cfg),
            NullHypothesis::Bartlett => bartlett_lrt_independence(sample),
        }
    }
}

/// Full description of one Monte-Carlo experiment.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub n: usize,
    pub p: usize,
    pub generator: Generator,
    pub nulls: Vec<NullHypothesis>,
    pub betas: Vec<f64>,
    pub replications: usize,
    pub alpha: f64,
    pub seed: u64,
    pub fit: FitConfig,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Data(
                "scenario requests zero replications; the summary would be empty".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!(
                "significance level must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.n < 2 {
            return Err(Error::Data(format!("need n >= 2, got {}", self.n)));
        }
        if self.generator.dim() != self.p {
            return Err(Error::Structure(format!(
                "generator dimension {} does not match p = {}",
                self.generator.dim(),
                self.p
            )));
        }
        self.generator.validate()?;
        if self.nulls.is_empty() {
            return Err(Error::Data("scenario lists no tests to run".into()));
        }
        if self.betas.is_empty() && self.nulls.iter().any(|t| t.beta_dependent()) {
            return Err(Error::Data("scenario lists no beta values".into()));
        }
        for &b in &self.betas {
            if !(b >= 0.0) {
                return Err(Error::Domain(format!("beta must be nonnegative, got {b}")));
            }
        }
        for null in &self.nulls {
            if let NullHypothesis::EquicorrFixed { rho0 } = null {
                check_equicorr_rho(*rho0, self.p)?;
            }
            if let NullHypothesis::SpecifiedR { r0 } = null {
                if r0.dim() != self.p {
                    return Err(Error::Structure(format!(
                        "R0 has dimension {}, scenario has p = {}",
                        r0.dim(),
                        self.p
                    )));
                }
            }
        }
        self.fit.validate()
    }
}

/// Per-(test, β) aggregate of a Monte-Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub test: TestKind,
    pub beta: f64,
    pub df: usize,
    pub replications: usize,
    /// Replications in which the test produced a report.
    pub completed: usize,
    /// Replications lost to estimator non-convergence or degeneracy.
    pub non_convergence: usize,
    pub rejections: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rejection_rate: Option<f64>,
    /// Binomial standard error of the rejection rate.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rejection_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub var_statistic: Option<f64>,
    /// Kolmogorov–Smirnov distance of the completed statistics to χ²_df.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ks_distance: Option<f64>,
}

/// Aggregate result of [`run_size_power`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    pub alpha: f64,
    pub seed: u64,
    pub cells: Vec<CellSummary>,
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `statistics` and the χ² distribution with `df` degrees of freedom.
pub fn ks_calibration(statistics: &[f64], df: usize) -> Result<f64> {
    if statistics.is_empty() {
        return Err(Error::Data(
            "cannot compute a KS distance on no statistics".into(),
        ));
    }
    if let Some(bad) = statistics.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "cannot compute a KS distance over non-finite statistic {bad}"
        )));
    }
    let mut sorted = statistics.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values are comparable"));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = chi_square_cdf(x, df)?;
        d = d.max(f - i as f64 / n);
        d = d.max((i + 1) as f64 / n - f);
    }
    Ok(d)
}

/// Run the scenario: per replication, draw a sample and evaluate every
/// configured test at every β, tallying rejections at level α, statistic
/// moments, a KS calibration distance and convergence failures.
/// Per-replication failures are tallied, not fatal. Replications execute
/// in parallel; the outcome is identical for a fixed seed regardless of
/// worker count.
pub fn run_size_power(spec: &ScenarioSpec) -> Result<MonteCarloSummary> {
    spec.validate()?;
    let cells: Vec<(NullHypothesis, f64)> = spec
        .nulls
        .iter()
        .flat_map(|null| {
            if null.beta_dependent() {
                spec.betas
                    .iter()
                    .map(|&b| (null.clone(), b))
                    .collect::<Vec<_>>()
            } else {
                vec![(null.clone(), 0.0)]
            }
        })
        .collect();

    // one Vec<Option<(statistic, p_value)>> per replication, cell-aligned
    let outcomes: Vec<Vec<Option<(f64, f64)>>> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| {
            let sample = match sample_generator(&spec.generator, spec.n, spec.seed, rep as u64) {
                Ok(s) => s,
                Err(_) => return vec![None; cells.len()],
            };
            cells
                .iter()
                .map(|(null, beta)| {
                    null.run(&sample, *beta, &spec.fit)
                        .ok()
                        .map(|rep| (rep.statistic, rep.p_value))
                })
                .collect()
        })
        .collect();

    let df = spec.p * (spec.p - 1) / 2;
    let mut summaries = Vec::with_capacity(cells.len());
    for (idx, (null, beta)) in cells.iter().enumerate() {
        let mut stats = Vec::new();
        let mut rejections = 0usize;
        for rep in &outcomes {
            if let Some((stat, p_value)) = rep[idx] {
                stats.push(stat);
                if p_value < spec.alpha {
                    rejections += 1;
                }
            }
        }
        let completed = stats.len();
        let non_convergence = spec.replications - completed;
        let (rate, se, mean, var, ks) = if completed > 0 {
            let rate = rejections as f64 / completed as f64;
            let se = (rate * (1.0 - rate) / completed as f64).sqrt();
            let mean = stats.iter().sum::<f64>() / completed as f64;
            let var = stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / completed as f64;
            let ks = ks_calibration(&stats, df)?;
            (Some(rate), Some(se), Some(mean), Some(var), Some(ks))
        } else {
            (None, None, None, None, None)
        };
        summaries.push(CellSummary {
            test: null.kind(),
            beta: *beta,
            df,
            replications: spec.replications,
            completed,
            non_convergence,
            rejections,
            rejection_rate: rate,
            rejection_se: se,
            mean_statistic: mean,
            var_statistic: var,
            ks_distance: ks,
        });
    }
    Ok(MonteCarloSummary {
        n: spec.n,
        p: spec.p,
        replications: spec.replications,
        alpha: spec.alpha,
        seed: spec.seed,
        cells: summaries,
    })
}
