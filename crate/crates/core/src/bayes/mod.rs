//! Bayesian linear regression by Gibbs sampling, with Gaussian or Student t
//! errors, plus chain diagnostics, summaries and predictive draws.

mod diagnostics;
mod gibbs;

pub use diagnostics::{effective_sample_size, geweke_z, trace_diagnostics, TraceDiagnostic, MIN_DIAGNOSTIC_DRAWS};
pub use gibbs::{draw_beta, fit_student_t_regression, gibbs_gaussian_regression, normal_equations, Design, INTERCEPT};

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::copula::order_statistic_index;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gaussian,
    #[serde(rename = "student_t")]
    StudentT,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::StudentT => "student_t",
        })
    }
}

/// Normal prior on β with mean `b0` and precision `precision`; inverse-gamma
/// prior on σ² with shape `a0` and rate `d0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionPrior {
    pub b0: Vec<f64>,
    /// Row-major `dim × dim` precision matrix.
    pub precision: Vec<f64>,
    pub a0: f64,
    pub d0: f64,
}

impl RegressionPrior {
    pub fn weak(dim: usize) -> Self {
        Self::scaled_identity(dim, 1e-4)
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        let mut precision = vec![0.0; dim * dim];
        for i in 0..dim {
            precision[i * dim + i] = scale;
        }
        Self { b0: vec![0.0; dim], precision, a0: 0.01, d0: 0.01 }
    }

    pub fn dim(&self) -> usize {
        self.b0.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.b0.len() != dim || self.precision.len() != dim * dim {
            return Err(Error::LengthMismatch(dim, self.b0.len()));
        }
        if !(self.a0 > 0.0 && self.d0 > 0.0) {
            return Err(Error::InvalidArgument("a0 and d0 must be positive".into()));
        }
        for i in 0..dim {
            for j in 0..i {
                if self.precision[i * dim + j] != self.precision[j * dim + i] {
                    return Err(Error::InvalidArgument("prior precision must be symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcOptions {
    pub iters: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self { iters: 11_000, burn_in: 1_000, seed: 1 }
    }
}

/// Every iteration's draw, burn-in included; `draws[t][j]` is parameter `j`
/// at iteration `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcChain {
    pub model: ModelKind,
    pub param_names: Vec<String>,
    /// Leading parameters that are regression coefficients.
    pub n_coefficients: usize,
    pub draws: Vec<Vec<f64>>,
    pub burn_in: usize,
    pub seed: u64,
    pub acceptance: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl McmcChain {
    pub fn n_iterations(&self) -> usize {
        self.draws.len()
    }

    pub fn n_kept(&self) -> usize {
        self.draws.len().saturating_sub(self.burn_in)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|p| p == name)
    }

    pub fn coefficient_names(&self) -> &[String] {
        &self.param_names[..self.n_coefficients]
    }

    /// Full trace of one parameter, burn-in included.
    pub fn trace(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    pub fn kept(&self, j: usize) -> Vec<f64> {
        self.draws[self.burn_in.min(self.draws.len())..].iter().map(|d| d[j]).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string()];
        header.extend(self.param_names.iter().cloned());
        w.write_record(&header)?;
        for (t, d) in self.draws.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(d.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

/// Mean, `n − 1` standard deviation and order-statistic quantiles.
pub fn summarize(x: &[f64]) -> Result<ParamSummary> {
    if x.is_empty() {
        return Err(Error::EmptyChain);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = if x.len() > 1 { (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |level: f64| s[order_statistic_index(level, s.len())];
    Ok(ParamSummary { mean, sd, q05: q(0.05), q25: q(0.25), q50: q(0.5), q75: q(0.75), q95: q(0.95) })
}

pub fn posterior_summary(chain: &McmcChain) -> Result<BTreeMap<String, ParamSummary>> {
    if chain.n_kept() == 0 {
        return Err(Error::EmptyChain);
    }
    chain.param_names.iter().enumerate().map(|(j, name)| Ok((name.clone(), summarize(&chain.kept(j))?))).collect()
}

/// Predictive log-sales at `x_new` (one entry per coefficient, intercept
/// included): resample kept draws with replacement, add model noise.
pub fn posterior_predictive(
    chain: &McmcChain,
    kind: ModelKind,
    x_new: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if chain.model != kind {
        return Err(Error::KindMismatch { chain: chain.model.to_string(), requested: kind.to_string() });
    }
    if x_new.len() != chain.n_coefficients {
        return Err(Error::LengthMismatch(chain.n_coefficients, x_new.len()));
    }
    let kept = &chain.draws[chain.burn_in.min(chain.draws.len())..];
    if kept.is_empty() {
        return Err(Error::EmptyChain);
    }
    let sigma2_idx = chain.param_index("sigma2").ok_or_else(|| Error::MissingColumn("sigma2".into()))?;
    let nu_idx = match kind {
        ModelKind::Gaussian => None,
        ModelKind::StudentT => Some(chain.param_index("nu").ok_or_else(|| Error::MissingColumn("nu".into()))?),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let d = &kept[rng.random_range(0..kept.len())];
        let mu: f64 = x_new.iter().zip(&d[..chain.n_coefficients]).map(|(x, b)| x * b).sum();
        let z: f64 = rng.sample(StandardNormal);
        let noise = match nu_idx {
            None => z,
            Some(k) => {
                let nu = d[k];
                let chi: f64 = ChiSquared::new(nu).map_err(|e| Error::DegenerateData(e.to_string()))?.sample(&mut rng);
                z / (chi / nu).sqrt()
            }
        };
        out.push(mu + d[sigma2_idx].sqrt() * noise);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::value_at_risk;

    fn fixed_chain(model: ModelKind, beta: Vec<f64>, sigma2: f64, len: usize) -> McmcChain {
        let mut names: Vec<String> = (0..beta.len()).map(|i| format!("b{i}")).collect();
        names.push("sigma2".into());
        let mut row = beta.clone();
        row.push(sigma2);
        if model == ModelKind::StudentT {
            names.push("nu".into());
            row.push(5.0);
        }
        McmcChain {
            model,
            param_names: names,
            n_coefficients: beta.len(),
            draws: vec![row; len],
            burn_in: 0,
            seed: 0,
            acceptance: BTreeMap::new(),
            warnings: vec![],
        }
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[2.5; 40]).unwrap();
        assert_eq!((s.mean, s.sd, s.q05, s.q50, s.q95), (2.5, 0.0, 2.5, 2.5, 2.5));
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize(&x).unwrap();
        assert_eq!(s.q50, 50.0);
        assert_eq!(s.q05, 5.0);
        assert_eq!(s.q95, 95.0);
        assert_eq!(summarize(&[]), Err(Error::EmptyChain));
    }

    #[test]
    fn summary_matches_streaming_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..5000).map(|_| 3.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        // Welford
        let (mut mean, mut m2) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let delta = v - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (v - mean);
        }
        let s = summarize(&x).unwrap();
        assert!((s.mean - mean).abs() < 1e-10);
        assert!((s.sd - (m2 / 4999.0).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn predictive_examples() {
        let deg = fixed_chain(ModelKind::Gaussian, vec![1.0, 2.0], 0.0, 10);
        let p = posterior_predictive(&deg, ModelKind::Gaussian, &[1.0, 0.5], 50, 1).unwrap();
        assert!(p.iter().all(|&v| v == 2.0));

        let unit = fixed_chain(ModelKind::Gaussian, vec![0.0], 1.0, 10);
        let p = posterior_predictive(&unit, ModelKind::Gaussian, &[1.0], 100_000, 2).unwrap();
        let sd = summarize(&p).unwrap().sd;
        assert!((0.99..=1.01).contains(&sd), "sd {sd}");
        assert!(value_at_risk(&p, 0.05).unwrap() <= summarize(&p).unwrap().q50);

        assert!(matches!(
            posterior_predictive(&unit, ModelKind::StudentT, &[1.0], 5, 1),
            Err(Error::KindMismatch { .. })
        ));
        let t = fixed_chain(ModelKind::StudentT, vec![0.0], 1.0, 10);
        let p = posterior_predictive(&t, ModelKind::StudentT, &[1.0], 20_000, 3).unwrap();
        // t with 5 df has variance 5/3
        let var = summarize(&p).unwrap().sd.powi(2);
        assert!((var - 5.0 / 3.0).abs() < 0.2, "var {var}");
    }

    #[test]
    fn chain_csv_has_header_and_all_iterations() {
        let c = fixed_chain(ModelKind::Gaussian, vec![1.0], 0.5, 3);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "iteration,b0,sigma2");
        assert_eq!(text.lines().count(), 4);
    }
}
