use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use super::{McmcChain, McmcOptions, ModelKind, RegressionPrior};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, MEAN_LOG_SALES, PROMO};
use crate::special::ln_gamma;

pub const INTERCEPT: &str = "intercept";

const NU_MIN: f64 = 2.0;
const NU_MAX: f64 = 100.0;
const NU_START: f64 = 10.0;
const NU_STEP: f64 = 0.4;
const ADAPT_BATCH: usize = 50;
const TARGET_ACCEPTANCE: f64 = 0.3;

/// Regression design: an intercept column (added unless present) followed by
/// the feature columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    /// Row-major `n × p`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Design {
    pub fn from_features(fm: &FeatureMatrix) -> Self {
        let add = fm.column_index(INTERCEPT).is_none();
        let mut names = Vec::with_capacity(fm.n_cols() + 1);
        if add {
            names.push(INTERCEPT.to_string());
        }
        names.extend(fm.column_names.iter().cloned());
        let mut x = Vec::with_capacity(fm.n_rows() * names.len());
        for i in 0..fm.n_rows() {
            if add {
                x.push(1.0);
            }
            x.extend_from_slice(fm.row(i));
        }
        Self { names, x, y: fm.y.clone() }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| self.y[i] - self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()).collect()
    }
}

/// `XᵀWX` and `XᵀWy`, with `W = diag(weights)` or the identity.
pub fn normal_equations(design: &Design, weights: Option<&[f64]>) -> (DMatrix<f64>, DVector<f64>) {
    let p = design.p();
    let mut xtx = DMatrix::zeros(p, p);
    let mut xty = DVector::zeros(p);
    for i in 0..design.n() {
        let r = design.row(i);
        let w = weights.map_or(1.0, |w| w[i]);
        for a in 0..p {
            let wa = w * r[a];
            xty[a] += wa * design.y[i];
            for b in 0..=a {
                xtx[(a, b)] += wa * r[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    (xtx, xty)
}

/// One draw of β from its normal full conditional with precision
/// `B0 + XᵀWX/σ²` and mean `precision⁻¹(B0·b0 + XᵀWy/σ²)`.
pub fn draw_beta<R: Rng>(
    xtwx: &DMatrix<f64>,
    xtwy: &DVector<f64>,
    sigma2: f64,
    prior: &RegressionPrior,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = xtwy.len();
    let b0_prec = DMatrix::from_row_slice(p, p, &prior.precision);
    let precision = &b0_prec + xtwx / sigma2;
    let rhs = &b0_prec * DVector::from_column_slice(&prior.b0) + xtwy / sigma2;
    let chol = precision.cholesky().ok_or(Error::SingularPrecision)?;
    let mean = chol.solve(&rhs);
    let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let dev = chol.l().transpose().solve_upper_triangular(&z).ok_or(Error::SingularPrecision)?;
    Ok((mean + dev).iter().copied().collect())
}

/// Inverse-gamma draw with shape `a` and rate `b`.
fn draw_inv_gamma<R: Rng>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(a, 1.0 / b).map_err(|e| Error::DegenerateData(e.to_string()))?;
    Ok(1.0 / g.sample(rng))
}

fn check_shapes(design: &Design, prior: &RegressionPrior, opts: &McmcOptions) -> Result<()> {
    if design.n() <= design.p() {
        return Err(Error::TooFewRows { needed: design.p() + 1, got: design.n() });
    }
    if opts.iters <= opts.burn_in {
        return Err(Error::InvalidArgument(format!(
            "iterations ({}) must exceed burn-in ({})",
            opts.iters, opts.burn_in
        )));
    }
    prior.validate(design.p())
}

fn initial_sigma2(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let v = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    if v > 0.0 {
        v
    } else {
        1.0
    }
}

fn finite_row(row: &[f64], t: usize) -> Result<()> {
    if row.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::DegenerateData(format!("non-finite draw at iteration {t}")))
    }
}

/// Two-block Gibbs sampler for `y = Xβ + ε`, `ε ~ N(0, σ²)`.
pub fn gibbs_gaussian_regression(fm: &FeatureMatrix, prior: &RegressionPrior, opts: &McmcOptions) -> Result<McmcChain> {
    let design = Design::from_features(fm);
    check_shapes(&design, prior, opts)?;
    let (xtx, xty) = normal_equations(&design, None);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut sigma2 = initial_sigma2(&design.y);
    let shape = prior.a0 + design.n() as f64 / 2.0;
    let mut draws = Vec::with_capacity(opts.iters);
    for t in 0..opts.iters {
        let beta = draw_beta(&xtx, &xty, sigma2, prior, &mut rng)?;
        let ssr: f64 = design.residuals(&beta).iter().map(|r| r * r).sum();
        sigma2 = draw_inv_gamma(shape, prior.d0 + ssr / 2.0, &mut rng)?;
        let mut row = beta;
        row.push(sigma2);
        finite_row(&row, t)?;
        draws.push(row);
    }
    let mut names = design.names.clone();
    names.push("sigma2".into());
    Ok(McmcChain {
        model: ModelKind::Gaussian,
        param_names: names,
        n_coefficients: design.p(),
        draws,
        burn_in: opts.burn_in,
        seed: opts.seed,
        acceptance: BTreeMap::new(),
        warnings: Vec::new(),
    })
}

/// Student t log-likelihood of residuals with scale `σ`, up to terms free of `ν`.
fn t_residual_loglik(resid: &[f64], sigma2: f64, nu: f64) -> f64 {
    let n = resid.len() as f64;
    let c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * nu.ln();
    n * c - (nu + 1.0) / 2.0 * resid.iter().map(|r| (r * r / (sigma2 * nu)).ln_1p()).sum::<f64>()
}

/// Scale-mixture Gibbs sampler for Student t errors with latent precisions
/// `λ_i`, a random-walk Metropolis step for `ν` on `ln(ν − 2)` (with `λ`
/// integrated out), and a Beta(1,1) posterior draw for the promo rate.
pub fn fit_student_t_regression(fm: &FeatureMatrix, prior: &RegressionPrior, opts: &McmcOptions) -> Result<McmcChain> {
    for name in [MEAN_LOG_SALES, PROMO] {
        if fm.column_index(name).is_none() {
            return Err(Error::MissingColumn(name.into()));
        }
    }
    let promo = fm.column(fm.column_index(PROMO).expect("checked"));
    if promo.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("Promo column must be binary".into()));
    }
    let design = Design::from_features(fm);
    check_shapes(&design, prior, opts)?;
    let n = design.n();
    let promo_count = promo.iter().sum::<f64>();
    let p_dist =
        Beta::new(1.0 + promo_count, 1.0 + n as f64 - promo_count).map_err(|e| Error::DegenerateData(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut sigma2 = initial_sigma2(&design.y);
    let mut nu = NU_START;
    let mut lambda = vec![1.0; n];
    let mut step = NU_STEP;
    let (mut batch_accepts, mut kept_accepts) = (0usize, 0usize);
    let shape = prior.a0 + n as f64 / 2.0;
    let mut draws = Vec::with_capacity(opts.iters);
    for t in 0..opts.iters {
        let (xtwx, xtwy) = normal_equations(&design, Some(&lambda));
        let beta = draw_beta(&xtwx, &xtwy, sigma2, prior, &mut rng)?;
        let resid = design.residuals(&beta);
        let wssr: f64 = resid.iter().zip(&lambda).map(|(r, l)| l * r * r).sum();
        sigma2 = draw_inv_gamma(shape, prior.d0 + wssr / 2.0, &mut rng)?;

        let eta = (nu - NU_MIN).ln();
        let proposal_eta = eta + step * rng.sample::<f64, _>(StandardNormal);
        let proposal = NU_MIN + proposal_eta.exp();
        let mut accepted = false;
        if proposal <= NU_MAX {
            let log_ratio = t_residual_loglik(&resid, sigma2, proposal) + proposal_eta
                - t_residual_loglik(&resid, sigma2, nu)
                - eta;
            if rng.random::<f64>().ln() < log_ratio {
                nu = proposal;
                accepted = true;
            }
        }
        if t < opts.burn_in {
            batch_accepts += usize::from(accepted);
            if (t + 1) % ADAPT_BATCH == 0 {
                let rate = batch_accepts as f64 / ADAPT_BATCH as f64;
                step *= (rate - TARGET_ACCEPTANCE).exp();
                batch_accepts = 0;
            }
        } else {
            kept_accepts += usize::from(accepted);
        }

        for (l, r) in lambda.iter_mut().zip(&resid) {
            let g = Gamma::new((nu + 1.0) / 2.0, 2.0 / (nu + r * r / sigma2))
                .map_err(|e| Error::DegenerateData(e.to_string()))?;
            *l = g.sample(&mut rng);
        }
        let p = p_dist.sample(&mut rng);

        let mut row = beta;
        row.extend([sigma2, nu, p]);
        finite_row(&row, t)?;
        draws.push(row);
    }
    let rate = kept_accepts as f64 / (opts.iters - opts.burn_in) as f64;
    let mut warnings = Vec::new();
    if rate < 0.05 {
        warnings.push(format!("MetropolisStuck: nu acceptance rate {rate:.3}"));
    }
    let mut names = design.names.clone();
    names.extend(["sigma2".to_string(), "nu".to_string(), "p".to_string()]);
    Ok(McmcChain {
        model: ModelKind::StudentT,
        param_names: names,
        n_coefficients: design.p(),
        draws,
        burn_in: opts.burn_in,
        seed: opts.seed,
        acceptance: [("nu".to_string(), rate), ("nu_step".to_string(), step)].into_iter().collect(),
        warnings,
    })
}
