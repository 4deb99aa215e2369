//! Bivariate dependence: pseudo-observations, Kendall's tau, Gaussian and
//! Student t copulas, gamma marginals and tail quantiles.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{bracketed_root, golden_section, nelder_mead, SimplexOptions};
use crate::special::{digamma, gamma_p, ln_gamma, norm_cdf, norm_ppf, t_cdf, t_ppf, trigamma};

/// Rank-transformed data, stored column-major. All entries lie in (0,1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoObservations {
    columns: Vec<Vec<f64>>,
}

impl PseudoObservations {
    /// Wrap columns that are already uniform scores.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.is_empty() || n == 0 {
            return Err(Error::EmptyInput);
        }
        for c in &columns {
            if c.len() != n {
                return Err(Error::LengthMismatch(n, c.len()));
            }
            if c.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
                return Err(Error::BoundaryInput);
            }
        }
        Ok(Self { columns })
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn into_columns(self) -> Vec<Vec<f64>> {
        self.columns
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// `u_ij = rank(x_ij) / (n + 1)` per column, ties averaged.
pub fn pseudo_observations(columns: &[Vec<f64>]) -> Result<PseudoObservations> {
    let n = columns.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let scale = 1.0 / (n as f64 + 1.0);
    let out = columns
        .iter()
        .map(|c| {
            if c.len() != n {
                return Err(Error::LengthMismatch(n, c.len()));
            }
            Ok(average_ranks(c).into_iter().map(|r| r * scale).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    PseudoObservations::from_columns(out)
}

/// Like [`pseudo_observations`] but ties in the listed columns are broken
/// by seeded uniform noise, for discrete variables such as promo flags.
pub fn jittered_pseudo_observations(columns: &[Vec<f64>], jitter: &[usize], seed: u64) -> Result<PseudoObservations> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = columns.to_vec();
    for &j in jitter {
        let c = cols.get_mut(j).ok_or_else(|| Error::InvalidArgument(format!("no column {j}")))?;
        let mut sorted = c.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let width = if gap.is_finite() { 0.5 * gap } else { 0.5 };
        for v in c.iter_mut() {
            *v += width * (rng.random::<f64>() - 0.5);
        }
    }
    pseudo_observations(&cols)
}

/// Tie-adjusted Kendall's tau (tau-b) by a full pair scan.
pub fn kendall_tau(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    let n = u.len();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let (mut s, mut tie_u, mut tie_v) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let a = (u[i] - u[j]).partial_cmp(&0.0).map_or(0, |o| o as i64);
            let b = (v[i] - v[j]).partial_cmp(&0.0).map_or(0, |o| o as i64);
            s += a * b;
            tie_u += i64::from(a == 0);
            tie_v += i64::from(b == 0);
        }
    }
    let total = (n * (n - 1) / 2) as i64;
    let denom = (((total - tie_u) as f64) * ((total - tie_v) as f64)).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(s as f64 / denom)
}

/// Elliptical correlation implied by Kendall's tau.
pub fn tau_to_rho(tau: f64) -> f64 {
    (PI * tau / 2.0).sin()
}

pub fn rho_to_tau(rho: f64) -> f64 {
    2.0 / PI * rho.asin()
}

pub const RHO_BOUND: f64 = 0.999;
pub const NU_MAX: f64 = 500.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianCopulaParams {
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TCopulaParams {
    pub rho: f64,
    pub nu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CopulaParams {
    Gaussian(GaussianCopulaParams),
    #[serde(rename = "t")]
    StudentT(TCopulaParams),
}

impl CopulaParams {
    pub fn gaussian(rho: f64) -> Self {
        CopulaParams::Gaussian(GaussianCopulaParams { rho })
    }

    pub fn student_t(rho: f64, nu: f64) -> Self {
        CopulaParams::StudentT(TCopulaParams { rho, nu })
    }

    pub fn rho(&self) -> f64 {
        match self {
            CopulaParams::Gaussian(p) => p.rho,
            CopulaParams::StudentT(p) => p.rho,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            CopulaParams::Gaussian(_) => 1,
            CopulaParams::StudentT(_) => 2,
        }
    }
}

/// A fitted copula with its pseudo-log-likelihood and that of the start point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopulaFit {
    pub params: CopulaParams,
    pub log_likelihood: f64,
    pub start_log_likelihood: f64,
}

fn interior(u: f64) -> bool {
    u > 0.0 && u < 1.0
}

fn gaussian_ln_density(rho: f64, x: f64, y: f64) -> f64 {
    let r2 = 1.0 - rho * rho;
    -0.5 * r2.ln() - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)
}

fn t_ln_const(nu: f64) -> f64 {
    ln_gamma((nu + 2.0) / 2.0) + ln_gamma(nu / 2.0) - 2.0 * ln_gamma((nu + 1.0) / 2.0)
}

fn t_ln_density(rho: f64, nu: f64, c: f64, x: f64, y: f64) -> f64 {
    let r2 = 1.0 - rho * rho;
    let q = (x * x - 2.0 * rho * x * y + y * y) / (nu * r2);
    c - 0.5 * r2.ln() - (nu + 2.0) / 2.0 * q.ln_1p() + (nu + 1.0) / 2.0 * ((x * x / nu).ln_1p() + (y * y / nu).ln_1p())
}

/// Log copula density at an interior point.
pub fn copula_ln_pdf(params: &CopulaParams, u: f64, v: f64) -> Result<f64> {
    if !interior(u) || !interior(v) {
        return Err(Error::BoundaryInput);
    }
    Ok(match *params {
        CopulaParams::Gaussian(p) => gaussian_ln_density(p.rho, norm_ppf(u), norm_ppf(v)),
        CopulaParams::StudentT(p) => t_ln_density(p.rho, p.nu, t_ln_const(p.nu), t_ppf(u, p.nu), t_ppf(v, p.nu)),
    })
}

pub fn copula_pdf(params: &CopulaParams, u: f64, v: f64) -> Result<f64> {
    copula_ln_pdf(params, u, v).map(f64::exp)
}

/// Pseudo-log-likelihood of a bivariate sample.
pub fn copula_log_likelihood(params: &CopulaParams, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    match *params {
        CopulaParams::Gaussian(p) => {
            let x: Vec<f64> = u.iter().map(|&a| norm_ppf(a)).collect();
            let y: Vec<f64> = v.iter().map(|&a| norm_ppf(a)).collect();
            Ok(gaussian_ll(p.rho, &x, &y))
        }
        CopulaParams::StudentT(p) => Ok(t_ll(p.rho, p.nu, u, v)),
    }
}

fn gaussian_ll(rho: f64, x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(&a, &b)| gaussian_ln_density(rho, a, b)).sum()
}

fn t_ll(rho: f64, nu: f64, u: &[f64], v: &[f64]) -> f64 {
    let c = t_ln_const(nu);
    u.iter().zip(v).map(|(&a, &b)| t_ln_density(rho, nu, c, t_ppf(a, nu), t_ppf(b, nu))).sum()
}

fn bivariate(pobs: &PseudoObservations, min_n: usize) -> Result<(&[f64], &[f64], f64)> {
    if pobs.d() != 2 {
        return Err(Error::ColumnMismatch {
            expected: vec!["u".into(), "v".into()],
            got: (0..pobs.d()).map(|j| format!("col{j}")).collect(),
        });
    }
    if pobs.n() < min_n {
        return Err(Error::TooFewRows { needed: min_n, got: pobs.n() });
    }
    let (u, v) = (pobs.column(0), pobs.column(1));
    let tau = kendall_tau(u, v)?;
    if tau.abs() >= 1.0 {
        return Err(Error::DegenerateData(format!("Kendall's tau is {tau}")));
    }
    Ok((u, v, tau))
}

/// Kendall inversion followed by a one-dimensional likelihood refinement.
pub fn fit_gaussian_copula(pobs: &PseudoObservations) -> Result<CopulaFit> {
    let (u, v, tau) = bivariate(pobs, 10)?;
    let x: Vec<f64> = u.iter().map(|&a| norm_ppf(a)).collect();
    let y: Vec<f64> = v.iter().map(|&a| norm_ppf(a)).collect();
    let start = tau_to_rho(tau).clamp(-RHO_BOUND, RHO_BOUND);
    let start_ll = gaussian_ll(start, &x, &y);
    let (rho, neg) = golden_section(|r| -gaussian_ll(r, &x, &y), -RHO_BOUND, RHO_BOUND, 1e-9);
    let (rho, ll) = if -neg >= start_ll { (rho, -neg) } else { (start, start_ll) };
    Ok(CopulaFit { params: CopulaParams::gaussian(rho), log_likelihood: ll, start_log_likelihood: start_ll })
}

pub const NU_GRID: [f64; 6] = [3.0, 5.0, 8.0, 12.0, 20.0, 30.0];

/// Pseudo-maximum likelihood over `(ρ, ln(ν − 2))`, started from Kendall
/// inversion and the best `ν` on a coarse grid.
pub fn fit_t_copula(pobs: &PseudoObservations) -> Result<CopulaFit> {
    let (u, v, tau) = bivariate(pobs, 30)?;
    let rho0 = tau_to_rho(tau).clamp(-RHO_BOUND, RHO_BOUND);
    let (nu0, start_ll) = NU_GRID
        .iter()
        .map(|&nu| (nu, t_ll(rho0, nu, u, v)))
        .fold((NU_GRID[0], f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
    let objective = |p: &[f64]| {
        let nu = 2.0 + p[1].exp();
        if p[0].abs() >= RHO_BOUND || nu > NU_MAX {
            return f64::INFINITY;
        }
        -t_ll(p[0], nu, u, v)
    };
    let opts = SimplexOptions { max_iter: 500, rel_tol: 1e-10, initial_step: 0.1 };
    let res = nelder_mead(objective, &[rho0, (nu0 - 2.0).ln()], opts);
    if !res.value.is_finite() {
        return Err(Error::OptimizerDiverged("t-copula likelihood is not finite".into()));
    }
    let (params, ll) = if -res.value >= start_ll {
        (CopulaParams::student_t(res.x[0], 2.0 + res.x[1].exp()), -res.value)
    } else {
        (CopulaParams::student_t(rho0, nu0), start_ll)
    };
    Ok(CopulaFit { params, log_likelihood: ll, start_log_likelihood: start_ll })
}

/// Bivariate draw on the normal/t scale before the marginal transform.
fn elliptical_pair<R: Rng>(params: &CopulaParams, rng: &mut R) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let rho = params.rho();
    let (x, y) = (z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2);
    match *params {
        CopulaParams::Gaussian(_) => (norm_cdf(x), norm_cdf(y)),
        CopulaParams::StudentT(p) => {
            let chi: f64 = ChiSquared::new(p.nu).expect("nu > 0").sample(rng);
            let s = (p.nu / chi).sqrt();
            (t_cdf(x * s, p.nu), t_cdf(y * s, p.nu))
        }
    }
}

const U_EPS: f64 = 1e-15;

pub(crate) fn clamp_unit(u: f64) -> f64 {
    u.clamp(U_EPS, 1.0 - U_EPS)
}

pub fn sample_copula(params: &CopulaParams, n: usize, seed: u64) -> Result<PseudoObservations> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let (a, b) = elliptical_pair(params, &mut rng);
        u.push(clamp_unit(a));
        v.push(clamp_unit(b));
    }
    PseudoObservations::from_columns(vec![u, v])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaMarginal {
    pub shape: f64,
    pub scale: f64,
}

impl GammaMarginal {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma shape {shape} and scale {scale} must be positive")));
        }
        Ok(Self { shape, scale })
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.shape - 1.0) * x.ln() - x / self.scale - ln_gamma(self.shape) - self.shape * self.scale.ln()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            gamma_p(self.shape, x / self.scale)
        }
    }

    /// Inverse CDF by bracketed root-finding to an absolute tolerance of 1e-10.
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return f64::INFINITY;
        }
        let mut hi = self.mean().max(self.scale);
        while self.cdf(hi) < u {
            hi *= 2.0;
        }
        bracketed_root(|x| self.cdf(x) - u, 0.0, hi, 1e-10)
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.ln_pdf(v)).sum()
    }
}

fn positive_moments(x: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 10 {
        return Err(Error::TooFewRows { needed: 10, got: x.len() });
    }
    if x.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveData);
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let s2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    if s2 <= 0.0 {
        return Err(Error::DegenerateData("constant sample".into()));
    }
    Ok((m, s2))
}

/// Method-of-moments gamma with sample variance on `n − 1` degrees of freedom.
pub fn gamma_moments(x: &[f64]) -> Result<GammaMarginal> {
    let (m, s2) = positive_moments(x)?;
    GammaMarginal::new(m * m / s2, s2 / m)
}

/// Maximum likelihood gamma: Newton iterations on `ln k − ψ(k) = ln m − mean(ln x)`
/// started from the moment estimate; `θ = m / k`.
pub fn fit_gamma_marginal(x: &[f64]) -> Result<GammaMarginal> {
    let mom = gamma_moments(x)?;
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let s = m.ln() - x.iter().map(|v| v.ln()).sum::<f64>() / n;
    if s <= 0.0 {
        return Err(Error::DegenerateData("mean log equals log mean".into()));
    }
    let mut k = mom.shape;
    for _ in 0..100 {
        let f = k.ln() - digamma(k) - s;
        let fp = 1.0 / k - trigamma(k);
        let mut next = k - f / fp;
        if !(next > 0.0) {
            next = k / 2.0;
        }
        let done = (next - k).abs() <= 1e-12 * k;
        k = next;
        if done {
            break;
        }
    }
    let mle = GammaMarginal::new(k, m / k)?;
    Ok(if mle.log_likelihood(x) >= mom.log_likelihood(x) { mle } else { mom })
}

/// Per-dimension marginal: parametric gamma or the empirical distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Marginal {
    Gamma(GammaMarginal),
    Empirical { sorted: Vec<f64> },
}

impl Marginal {
    pub fn empirical(x: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Marginal::Empirical { sorted })
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::Gamma(g) => g.quantile(u),
            Marginal::Empirical { sorted } => sorted[order_statistic_index(u, sorted.len())],
        }
    }
}

/// Map uniforms to the data scale column by column through gamma quantiles.
pub fn inverse_cdf_map(pobs: &PseudoObservations, marginals: &[GammaMarginal]) -> Result<Vec<Vec<f64>>> {
    if pobs.d() != marginals.len() {
        return Err(Error::LengthMismatch(pobs.d(), marginals.len()));
    }
    Ok(pobs.columns().iter().zip(marginals).map(|(c, g)| c.iter().map(|&u| g.quantile(u)).collect()).collect())
}

/// Sklar decomposition: one copula plus one marginal per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    pub copula: CopulaParams,
    pub marginals: Vec<Marginal>,
    pub column_names: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaFamily {
    Gaussian,
    #[serde(rename = "t")]
    StudentT,
}

impl std::str::FromStr for CopulaFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(CopulaFamily::Gaussian),
            "t" | "student" | "studentt" | "student-t" => Ok(CopulaFamily::StudentT),
            other => Err(Error::InvalidArgument(format!("unknown copula family `{other}`"))),
        }
    }
}

pub fn fit_copula(pobs: &PseudoObservations, family: CopulaFamily) -> Result<CopulaFit> {
    match family {
        CopulaFamily::Gaussian => fit_gaussian_copula(pobs),
        CopulaFamily::StudentT => fit_t_copula(pobs),
    }
}

impl JointModel {
    /// Copula on pseudo-observations, gamma marginals fitted separately.
    pub fn fit(columns: &[Vec<f64>], names: &[String], family: CopulaFamily) -> Result<(Self, CopulaFit)> {
        if columns.len() != 2 || names.len() != 2 {
            return Err(Error::InvalidArgument("joint model needs exactly two columns".into()));
        }
        let pobs = pseudo_observations(columns)?;
        let fit = fit_copula(&pobs, family)?;
        let marginals =
            columns.iter().map(|c| fit_gamma_marginal(c).map(Marginal::Gamma)).collect::<Result<Vec<_>>>()?;
        Ok((Self { copula: fit.params, marginals, column_names: names.to_vec() }, fit))
    }

    /// Copula draws mapped through each marginal's quantile function.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let pobs = sample_copula(&self.copula, n, seed)?;
        if pobs.d() != self.marginals.len() {
            return Err(Error::LengthMismatch(pobs.d(), self.marginals.len()));
        }
        Ok(pobs
            .columns()
            .iter()
            .zip(&self.marginals)
            .map(|(c, m)| c.iter().map(|&u| m.quantile(u)).collect())
            .collect())
    }
}

/// Zero-based index of the `⌈level·n⌉`-th order statistic.
pub fn order_statistic_index(level: f64, n: usize) -> usize {
    let k = (level * n as f64 * (1.0 - 1e-12)).ceil() as usize;
    k.clamp(1, n) - 1
}

/// Which end of the distribution is the risk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    /// Large values are bad (losses).
    #[default]
    Upper,
    /// Small values are bad (sales shortfall).
    Lower,
}

/// The `⌈level·n⌉`-th order statistic of the samples.
pub fn value_at_risk(samples: &[f64], level: f64) -> Result<f64> {
    value_at_risk_tail(samples, level, Tail::Upper)
}

/// With [`Tail::Lower`] the `⌈(1 − level)·n⌉`-th order statistic is returned.
pub fn value_at_risk_tail(samples: &[f64], level: f64, tail: Tail) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} outside (0,1)")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = match tail {
        Tail::Upper => level,
        Tail::Lower => 1.0 - level,
    };
    Ok(sorted[order_statistic_index(q, sorted.len())])
}
