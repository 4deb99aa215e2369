use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::McmcChain;
use crate::error::{Error, Result};

pub const MIN_DIAGNOSTIC_DRAWS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDiagnostic {
    pub ess: f64,
    pub geweke_z: f64,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Effective sample size `N / (1 + 2 Σ ρ_k)`, summing autocorrelations in
/// adjacent pairs until the first pair with a non-positive sum.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let acov = |k: usize| c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let g0 = acov(0);
    if g0 <= 0.0 {
        return n as f64;
    }
    // τ = −1 + 2 Σ_m (ρ_{2m} + ρ_{2m+1}), with ρ_0 = 1
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = (acov(k) + acov(k + 1)) / g0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    n as f64 / tau.max(1.0 / n as f64)
}

/// Variance of the mean of `x` by non-overlapping batch means of size `⌊√n⌋`.
fn batch_means_variance(x: &[f64]) -> f64 {
    let size = (x.len() as f64).sqrt().floor().max(1.0) as usize;
    let k = x.len() / size;
    if k < 2 {
        return 0.0;
    }
    let means: Vec<f64> = (0..k).map(|b| mean(&x[b * size..(b + 1) * size])).collect();
    let mm = mean(&means);
    let s2 = means.iter().map(|v| (v - mm).powi(2)).sum::<f64>() / (k - 1) as f64;
    s2 / k as f64
}

/// Difference of the means of the first 10% and last 50% of the draws over
/// its batch-means standard error. Zero when both halves are constant.
pub fn geweke_z(x: &[f64]) -> f64 {
    let n = x.len();
    let a = &x[..n / 10];
    let b = &x[n - n / 2..];
    let var = batch_means_variance(a) + batch_means_variance(b);
    if var <= 0.0 {
        return 0.0;
    }
    (mean(a) - mean(b)) / var.sqrt()
}

/// Per-parameter diagnostics of the post-burn-in draws.
pub fn trace_diagnostics(chain: &McmcChain) -> Result<BTreeMap<String, TraceDiagnostic>> {
    if chain.n_kept() < MIN_DIAGNOSTIC_DRAWS {
        return Err(Error::ChainTooShort { needed: MIN_DIAGNOSTIC_DRAWS, got: chain.n_kept() });
    }
    Ok(chain
        .param_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let x = chain.kept(j);
            (name.clone(), TraceDiagnostic { ess: effective_sample_size(&x), geweke_z: geweke_z(&x) })
        })
        .collect())
}
