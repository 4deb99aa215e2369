//! Canonical vines: a root variable per tree, bivariate pair-copulas on
//! every root edge, conditional pseudo-observations via h-functions.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::copula::{clamp_unit, fit_gaussian_copula, fit_t_copula, kendall_tau, CopulaParams, PseudoObservations};
use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_ppf, t_cdf, t_ppf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairFamily {
    Independence,
    Gaussian,
    #[serde(rename = "t")]
    StudentT,
}

impl std::str::FromStr for PairFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "independence" | "indep" | "i" => Ok(PairFamily::Independence),
            "gaussian" | "normal" | "n" => Ok(PairFamily::Gaussian),
            "t" | "student" | "studentt" | "student-t" => Ok(PairFamily::StudentT),
            other => Err(Error::InvalidArgument(format!("unknown pair family `{other}`"))),
        }
    }
}

pub fn all_families() -> BTreeSet<PairFamily> {
    [PairFamily::Independence, PairFamily::Gaussian, PairFamily::StudentT].into_iter().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum PairCopula {
    Independence,
    Gaussian {
        rho: f64,
    },
    #[serde(rename = "t")]
    StudentT {
        rho: f64,
        nu: f64,
    },
}

impl PairCopula {
    pub fn family(&self) -> PairFamily {
        match self {
            PairCopula::Independence => PairFamily::Independence,
            PairCopula::Gaussian { .. } => PairFamily::Gaussian,
            PairCopula::StudentT { .. } => PairFamily::StudentT,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            PairCopula::Independence => 0,
            PairCopula::Gaussian { .. } => 1,
            PairCopula::StudentT { .. } => 2,
        }
    }

    fn from_params(p: CopulaParams) -> Self {
        match p {
            CopulaParams::Gaussian(g) => PairCopula::Gaussian { rho: g.rho },
            CopulaParams::StudentT(t) => PairCopula::StudentT { rho: t.rho, nu: t.nu },
        }
    }

    pub fn as_params(&self) -> Option<CopulaParams> {
        match *self {
            PairCopula::Independence => None,
            PairCopula::Gaussian { rho } => Some(CopulaParams::gaussian(rho)),
            PairCopula::StudentT { rho, nu } => Some(CopulaParams::student_t(rho, nu)),
        }
    }
}

fn check_interior(u: f64, v: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::BoundaryInput)
    }
}

/// Conditional distribution `h(u | v) = ∂C(u, v)/∂v`.
pub fn h_function(pc: &PairCopula, u: f64, v: f64) -> Result<f64> {
    check_interior(u, v)?;
    Ok(h_unchecked(pc, u, v))
}

fn h_unchecked(pc: &PairCopula, u: f64, v: f64) -> f64 {
    let h = match *pc {
        PairCopula::Independence => return u,
        PairCopula::Gaussian { rho } => norm_cdf((norm_ppf(u) - rho * norm_ppf(v)) / (1.0 - rho * rho).sqrt()),
        PairCopula::StudentT { rho, nu } => {
            let (x, y) = (t_ppf(u, nu), t_ppf(v, nu));
            let s = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
            t_cdf((x - rho * y) / s, nu + 1.0)
        }
    };
    clamp_unit(h)
}

/// Inverse of [`h_function`] in its first argument.
pub fn h_inverse(pc: &PairCopula, w: f64, v: f64) -> Result<f64> {
    check_interior(w, v)?;
    Ok(h_inverse_unchecked(pc, w, v))
}

fn h_inverse_unchecked(pc: &PairCopula, w: f64, v: f64) -> f64 {
    let u = match *pc {
        PairCopula::Independence => return w,
        PairCopula::Gaussian { rho } => norm_cdf(norm_ppf(w) * (1.0 - rho * rho).sqrt() + rho * norm_ppf(v)),
        PairCopula::StudentT { rho, nu } => {
            let y = t_ppf(v, nu);
            let s = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
            t_cdf(t_ppf(w, nu + 1.0) * s + rho * y, nu)
        }
    };
    clamp_unit(u)
}

/// One pair-copula of the vine: variable `var` paired with the tree's
/// `root`, conditional on the roots of all earlier trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VineEdge {
    pub tree: usize,
    pub root: usize,
    pub var: usize,
    pub conditioning: Vec<usize>,
    pub label: String,
    pub copula: PairCopula,
    /// Empirical Kendall's tau of the (conditional) pair.
    pub tau: f64,
    pub log_likelihood: f64,
    pub aic: f64,
    /// Whether the independence pre-test accepted independence.
    pub independence_accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CVineSpec {
    /// Variables in root order; `order[t]` is the root of tree `t`.
    pub order: Vec<usize>,
    pub names: Vec<String>,
    /// `trees[t]` holds `d − t − 1` edges.
    pub trees: Vec<Vec<VineEdge>>,
    /// Kendall's tau of each first-tree edge, in edge order.
    pub tree1_taus: Vec<f64>,
    pub n_obs: usize,
    /// Variables whose ties were broken by jittering before ranking.
    #[serde(default)]
    pub jittered: Vec<String>,
}

impl CVineSpec {
    pub fn dim(&self) -> usize {
        self.order.len()
    }

    pub fn n_edges(&self) -> usize {
        self.trees.iter().map(Vec::len).sum()
    }

    pub fn edge(&self, tree: usize, var: usize) -> Option<&VineEdge> {
        self.trees.get(tree)?.iter().find(|e| e.var == var)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Check tree sizes and that each tree's edges cover the remaining variables.
    pub fn validate(&self) -> Result<()> {
        let d = self.order.len();
        let distinct: BTreeSet<usize> = self.order.iter().copied().collect();
        if d < 2 || distinct.len() != d || distinct.iter().any(|&v| v >= d) {
            return Err(Error::InvalidArgument("vine order must be a permutation".into()));
        }
        if self.trees.len() != d - 1 {
            return Err(Error::InvalidArgument(format!("expected {} trees, got {}", d - 1, self.trees.len())));
        }
        for (t, edges) in self.trees.iter().enumerate() {
            let vars: BTreeSet<usize> = edges.iter().map(|e| e.var).collect();
            let expected: BTreeSet<usize> = self.order[t + 1..].iter().copied().collect();
            if vars != expected || edges.len() != d - t - 1 || edges.iter().any(|e| e.root != self.order[t]) {
                return Err(Error::InvalidArgument(format!("tree {} does not match the vine order", t + 1)));
            }
        }
        Ok(())
    }
}

/// Independence test statistic `|τ|·sqrt(9n(n−1) / (2(2n+5)))`.
pub fn independence_statistic(tau: f64, n: usize) -> f64 {
    let n = n as f64;
    tau.abs() * (9.0 * n * (n - 1.0) / (2.0 * (2.0 * n + 5.0))).sqrt()
}

fn tau_matrix(cols: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    let d = cols.len();
    let mut m = vec![vec![0.0; d]; d];
    for i in 0..d {
        m[i][i] = 1.0;
        for j in i + 1..d {
            let t = kendall_tau(cols[i], cols[j])?;
            m[i][j] = t;
            m[j][i] = t;
        }
    }
    Ok(m)
}

fn argmax_abs_sum(taus: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_sum = f64::NEG_INFINITY;
    for (i, row) in taus.iter().enumerate() {
        let s: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, t)| t.abs()).sum();
        if s > best_sum {
            best_sum = s;
            best = i;
        }
    }
    best
}

/// Variable with the largest summed absolute Kendall's tau to the others;
/// ties go to the lowest index.
pub fn select_cvine_root(pobs: &PseudoObservations) -> Result<usize> {
    if pobs.d() < 2 {
        return Err(Error::InvalidArgument("root selection needs at least two variables".into()));
    }
    let cols: Vec<&[f64]> = (0..pobs.d()).map(|j| pobs.column(j)).collect();
    Ok(argmax_abs_sum(&tau_matrix(&cols)?))
}

/// Pair-copula selection: independence pre-test, then minimum AIC among the
/// allowed families (independence scores AIC 0).
pub fn fit_pair(u: &[f64], v: &[f64], allowed: &BTreeSet<PairFamily>) -> Result<(PairCopula, f64, f64, f64, bool)> {
    if allowed.is_empty() {
        return Err(Error::InvalidArgument("no pair-copula family allowed".into()));
    }
    let tau = kendall_tau(u, v)?;
    let accepted = independence_statistic(tau, u.len()) < 1.96;
    if accepted && allowed.contains(&PairFamily::Independence) {
        return Ok((PairCopula::Independence, tau, 0.0, 0.0, true));
    }
    let pobs = PseudoObservations::from_columns(vec![u.to_vec(), v.to_vec()])?;
    let mut best: Option<(PairCopula, f64, f64)> = None;
    for &family in allowed {
        let (pc, ll) = match family {
            PairFamily::Independence => (PairCopula::Independence, 0.0),
            PairFamily::Gaussian => {
                let f = fit_gaussian_copula(&pobs)?;
                (PairCopula::from_params(f.params), f.log_likelihood)
            }
            PairFamily::StudentT => {
                let f = fit_t_copula(&pobs)?;
                (PairCopula::from_params(f.params), f.log_likelihood)
            }
        };
        let aic = -2.0 * ll + 2.0 * pc.n_params() as f64;
        if best.as_ref().is_none_or(|b| aic < b.2) {
            best = Some((pc, ll, aic));
        }
    }
    let (pc, ll, aic) = best.expect("non-empty family set");
    Ok((pc, tau, ll, aic, accepted))
}

/// Sequential tree-by-tree estimation. Each tree's root maximizes the summed
/// absolute tau among the remaining conditional pseudo-observations.
pub fn fit_cvine(pobs: &PseudoObservations, allowed: &BTreeSet<PairFamily>, names: &[String]) -> Result<CVineSpec> {
    let d = pobs.d();
    if d < 2 {
        return Err(Error::InvalidArgument("a vine needs at least two variables".into()));
    }
    if pobs.n() < 50 {
        return Err(Error::TooFewRows { needed: 50, got: pobs.n() });
    }
    if names.len() != d {
        return Err(Error::LengthMismatch(d, names.len()));
    }
    let mut w: Vec<Vec<f64>> = pobs.columns().to_vec();
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut order = Vec::with_capacity(d);
    let mut trees = Vec::with_capacity(d - 1);
    for t in 0..d - 1 {
        let cols: Vec<&[f64]> = remaining.iter().map(|&i| w[i].as_slice()).collect();
        let root = remaining[argmax_abs_sum(&tau_matrix(&cols)?)];
        let conditioning = order.clone();
        let mut edges = Vec::with_capacity(remaining.len() - 1);
        let mut updates = Vec::new();
        for &var in remaining.iter().filter(|&&v| v != root) {
            let (copula, tau, ll, aic, accepted) = fit_pair(&w[var], &w[root], allowed)?;
            let label = edge_label(names, var, root, &conditioning);
            if t + 1 < d - 1 {
                let h: Vec<f64> = w[var].iter().zip(&w[root]).map(|(&a, &b)| h_unchecked(&copula, a, b)).collect();
                updates.push((var, h));
            }
            edges.push(VineEdge {
                tree: t,
                root,
                var,
                conditioning: conditioning.clone(),
                label,
                copula,
                tau,
                log_likelihood: ll,
                aic,
                independence_accepted: accepted,
            });
        }
        for (var, h) in updates {
            w[var] = h;
        }
        order.push(root);
        remaining.retain(|&v| v != root);
        trees.push(edges);
    }
    order.push(remaining[0]);
    let tree1_taus = trees[0].iter().map(|e| e.tau).collect();
    Ok(CVineSpec { order, names: names.to_vec(), trees, tree1_taus, n_obs: pobs.n(), jittered: Vec::new() })
}

fn edge_label(names: &[String], var: usize, root: usize, conditioning: &[usize]) -> String {
    let mut s = format!("{},{}", names[var], names[root]);
    if !conditioning.is_empty() {
        s.push_str(" | ");
        s.push_str(&conditioning.iter().map(|&c| names[c].as_str()).collect::<Vec<_>>().join(","));
    }
    s
}

/// Draw independent uniforms and invert the h-functions along the vine.
/// Output columns follow the original variable indices.
pub fn sample_cvine(spec: &CVineSpec, n: usize, seed: u64) -> Result<PseudoObservations> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let d = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![Vec::with_capacity(n); d];
    let mut w = vec![0.0; d];
    for _ in 0..n {
        for wi in w.iter_mut() {
            *wi = clamp_unit(rng.random::<f64>());
        }
        for (i, &var) in spec.order.iter().enumerate() {
            let mut cond = w[i];
            for k in (0..i).rev() {
                let edge = spec.edge(k, var).expect("validated");
                cond = h_inverse_unchecked(&edge.copula, cond, w[k]);
            }
            cols[var].push(cond);
        }
    }
    PseudoObservations::from_columns(cols)
}
