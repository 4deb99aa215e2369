//! Non-seasonal ARIMA fitted by conditional sum of squares with AIC order
//! selection over a `(p, d, q)` grid.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::SeriesView;
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, SimplexOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub order: ArimaOrder,
    pub aic: f64,
    pub css: f64,
    /// CSS at the method-of-moments start point.
    pub start_css: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
    pub aic: f64,
    /// Last `p` values of the differenced series, oldest first.
    pub last_values: Vec<f64>,
    /// Last `q` in-sample innovations, oldest first.
    pub last_residuals: Vec<f64>,
    /// Last value of each differencing level: `x`, `Δx`, ..., `Δ^{d-1}x`.
    pub level_tails: Vec<f64>,
    /// Every grid candidate evaluated during order selection.
    #[serde(default)]
    pub candidates: Vec<CandidateScore>,
}

pub fn difference(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Conditional innovations with pre-sample innovations fixed at zero; the
/// first `p` observations only condition. `params = [c, φ.., θ..]`.
pub fn css_residuals(w: &[f64], p: usize, q: usize, params: &[f64]) -> (f64, Vec<f64>) {
    let c = params[0];
    let phi = &params[1..1 + p];
    let theta = &params[1 + p..1 + p + q];
    let mut e = vec![0.0; w.len()];
    let mut css = 0.0;
    for t in p..w.len() {
        let mut pred = c;
        for (i, ph) in phi.iter().enumerate() {
            pred += ph * w[t - 1 - i];
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j {
                pred += th * e[t - 1 - j];
            }
        }
        e[t] = w[t] - pred;
        css += e[t] * e[t];
    }
    (css, e)
}

/// All roots of `1 + θ1·z + ... + θq·z^q` lie strictly outside the unit circle.
pub fn is_invertible(theta: &[f64]) -> bool {
    let q = theta.len();
    if q == 0 {
        return true;
    }
    // companion matrix of z^q + θ1 z^{q-1} + ... + θq, whose roots are the reciprocals
    let companion = DMatrix::from_fn(q, q, |i, j| {
        if i == 0 {
            -theta[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion.complex_eigenvalues().iter().all(|l| l.norm() < 1.0)
}

pub fn css_aic(css: f64, n_eff: usize, p: usize, q: usize) -> f64 {
    let n = n_eff as f64;
    n * (css / n).max(f64::MIN_POSITIVE).ln() + 2.0 * (p + q + 1) as f64
}

/// Yule–Walker AR coefficients and matching intercept.
fn moment_start(w: &[f64], p: usize, q: usize) -> Vec<f64> {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let acov = |k: usize| -> f64 { (k..w.len()).map(|t| (w[t] - mean) * (w[t - k] - mean)).sum::<f64>() / n };
    let mut phi = vec![0.0; p];
    let g0 = acov(0);
    if p > 0 && g0 > 1e-14 * (1.0 + mean * mean) {
        let gam: Vec<f64> = (0..=p).map(acov).collect();
        let toeplitz = DMatrix::from_fn(p, p, |i, j| gam[i.abs_diff(j)]);
        let rhs = DVector::from_fn(p, |i, _| gam[i + 1]);
        if let Some(sol) = toeplitz.lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                phi = sol.iter().copied().collect();
            }
        }
    }
    let mut start = vec![mean * (1.0 - phi.iter().sum::<f64>())];
    start.extend(phi);
    start.extend(std::iter::repeat_n(0.0, q));
    start
}

fn fit_order(x: &[f64], order: ArimaOrder) -> Result<(ArimaModel, f64)> {
    let mut w = x.to_vec();
    let mut level_tails = Vec::with_capacity(order.d);
    for _ in 0..order.d {
        level_tails.push(*w.last().ok_or(Error::EmptyInput)?);
        w = difference(&w);
    }
    let (p, q) = (order.p, order.q);
    if w.len() <= p + 1 {
        return Err(Error::SeriesTooShort { needed: p + 2 + order.d, got: x.len() });
    }
    let start = moment_start(&w, p, q);
    let objective = |params: &[f64]| {
        if is_invertible(&params[1 + p..]) {
            css_residuals(&w, p, q, params).0
        } else {
            f64::INFINITY
        }
    };
    let start_css = objective(&start);
    let opts = SimplexOptions { max_iter: 500, rel_tol: 1e-8, initial_step: 0.1 };
    let first = nelder_mead(objective, &start, opts);
    let second = nelder_mead(objective, &first.x, opts);
    let best = if second.value <= first.value { second } else { first };
    let (params, css) = if best.value <= start_css { (best.x, best.value) } else { (start, start_css) };
    if !css.is_finite() {
        return Err(Error::OptimizerDiverged(format!("non-finite CSS for order {order}")));
    }
    let (_, resid) = css_residuals(&w, p, q, &params);
    let n_eff = w.len() - p;
    let model = ArimaModel {
        order,
        intercept: params[0],
        phi: params[1..1 + p].to_vec(),
        theta: params[1 + p..].to_vec(),
        sigma2: (css / n_eff as f64).max(f64::MIN_POSITIVE),
        aic: css_aic(css, n_eff, p, q),
        last_values: w[w.len() - p..].to_vec(),
        last_residuals: resid[resid.len() - q..].to_vec(),
        level_tails,
        candidates: Vec::new(),
    };
    Ok((model, start_css))
}

/// Fit a single fixed order.
pub fn fit_arima_order(train: &SeriesView, order: ArimaOrder) -> Result<ArimaModel> {
    if order.d > 2 {
        return Err(Error::InvalidArgument("differencing order must be 0, 1 or 2".into()));
    }
    fit_order(&train.log_sales, order).map(|(m, _)| m)
}

/// Grid search over all orders within the maxima, keeping the minimum-AIC
/// fit. Ties go to the earliest candidate in `(d, p, q)` order.
pub fn fit_arima(train: &SeriesView, max_p: usize, max_d: usize, max_q: usize) -> Result<ArimaModel> {
    if max_d > 2 {
        return Err(Error::InvalidArgument("differencing order must be 0, 1 or 2".into()));
    }
    let needed = 10 * (max_p + max_q + 1);
    if train.len() < needed {
        return Err(Error::SeriesTooShort { needed, got: train.len() });
    }
    let mut candidates = Vec::new();
    let mut best: Option<ArimaModel> = None;
    for d in 0..=max_d {
        for p in 0..=max_p {
            for q in 0..=max_q {
                let order = ArimaOrder { p, d, q };
                let (model, start_css) = fit_order(&train.log_sales, order)?;
                candidates.push(CandidateScore {
                    order,
                    aic: model.aic,
                    css: model.sigma2 * (train.len() - d - p) as f64,
                    start_css,
                });
                if best.as_ref().is_none_or(|b| model.aic < b.aic) {
                    best = Some(model);
                }
            }
        }
    }
    let mut best = best.expect("grid is non-empty");
    debug_assert!(candidates.iter().all(|c| best.aic <= c.aic));
    best.candidates = candidates;
    Ok(best)
}

impl ArimaModel {
    /// Recursive point forecast with future innovations set to zero.
    pub fn forecast(&self, horizon: usize) -> Vec<f64> {
        let p = self.order.p;
        let q = self.order.q;
        let mut w_hist = self.last_values.clone();
        let mut e_hist = self.last_residuals.clone();
        let mut levels = self.level_tails.clone();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let mut w = self.intercept;
            for i in 0..p.min(w_hist.len()) {
                w += self.phi[i] * w_hist[w_hist.len() - 1 - i];
            }
            for j in 0..q.min(e_hist.len()) {
                w += self.theta[j] * e_hist[e_hist.len() - 1 - j];
            }
            w_hist.push(w);
            e_hist.push(0.0);
            let mut val = w;
            for level in levels.iter_mut().rev() {
                *level += val;
                val = *level;
            }
            out.push(val);
        }
        out
    }
}
