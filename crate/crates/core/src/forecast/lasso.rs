//! L1-penalized least squares by cyclic coordinate descent on standardized
//! columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

const TOL: f64 = 1e-7;
const MAX_SWEEPS: usize = 10_000;
const FAIL_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub column_names: Vec<String>,
    /// Coefficients on the original column scale.
    pub beta: Vec<f64>,
    /// Intercept on the original scale.
    pub intercept: f64,
    pub lambda: f64,
    pub means: Vec<f64>,
    /// Population standard deviations; zero marks a dropped constant column.
    pub sds: Vec<f64>,
    pub sweeps: usize,
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Column-major standardized design plus its centering/scaling stats.
pub(crate) struct Standardized {
    pub cols: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

pub(crate) fn standardize(fm: &FeatureMatrix) -> Standardized {
    let n = fm.n_rows() as f64;
    let mut cols = Vec::with_capacity(fm.n_cols());
    let mut means = Vec::with_capacity(fm.n_cols());
    let mut sds = Vec::with_capacity(fm.n_cols());
    for j in 0..fm.n_cols() {
        let col = fm.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) {
            cols.push(col.iter().map(|v| (v - mean) / sd).collect());
            sds.push(sd);
        } else {
            cols.push(vec![0.0; col.len()]);
            sds.push(0.0);
        }
        means.push(mean);
    }
    Standardized { cols, means, sds }
}

/// Smallest penalty at which every standardized coefficient is zero.
pub fn lambda_max(fm: &FeatureMatrix) -> f64 {
    let st = standardize(fm);
    let n = fm.n_rows() as f64;
    let ybar = fm.y.iter().sum::<f64>() / n;
    st.cols.iter().map(|c| c.iter().zip(&fm.y).map(|(z, y)| z * (y - ybar)).sum::<f64>().abs() / n).fold(0.0, f64::max)
}

/// Minimize `(1/2n)‖y − ȳ − Zβ‖² + λ‖β‖₁` over standardized `Z`.
pub fn fit_lasso(fm: &FeatureMatrix, lambda: f64) -> Result<LassoModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument("lambda must be finite and non-negative".into()));
    }
    let n_rows = fm.n_rows();
    if n_rows < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n_rows });
    }
    let n = n_rows as f64;
    let st = standardize(fm);
    let ybar = fm.y.iter().sum::<f64>() / n;
    let mut resid: Vec<f64> = fm.y.iter().map(|y| y - ybar).collect();
    let p = fm.n_cols();
    let mut b = vec![0.0; p];
    let mut sweeps = 0;
    let mut max_change = f64::INFINITY;
    while sweeps < MAX_SWEEPS && max_change >= TOL {
        sweeps += 1;
        max_change = 0.0;
        for j in 0..p {
            if st.sds[j] == 0.0 {
                continue;
            }
            let z = &st.cols[j];
            let rho = z.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / n + b[j];
            let updated = soft_threshold(rho, lambda);
            let delta = updated - b[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(z) {
                    *r -= delta * a;
                }
                b[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
    }
    if max_change >= TOL && max_change > FAIL_TOL {
        return Err(Error::DidNotConverge(max_change));
    }
    let beta: Vec<f64> = b.iter().zip(&st.sds).map(|(bj, sd)| if *sd > 0.0 { bj / sd } else { 0.0 }).collect();
    let intercept = ybar - beta.iter().zip(&st.means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LassoModel {
        column_names: fm.column_names.clone(),
        beta,
        intercept,
        lambda,
        means: st.means,
        sds: st.sds,
        sweeps,
    })
}

impl LassoModel {
    pub fn predict(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        fm.ensure_columns(&self.column_names)?;
        Ok((0..fm.n_rows())
            .map(|i| self.intercept + fm.row(i).iter().zip(&self.beta).map(|(x, b)| x * b).sum::<f64>())
            .collect())
    }

    /// Coefficients on the standardized scale.
    pub fn standardized_beta(&self) -> Vec<f64> {
        self.beta.iter().zip(&self.sds).map(|(b, s)| b * s).collect()
    }
}

/// Contiguous fold labels for `n` rows in the given order.
pub fn contiguous_folds(n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| i * k / n).collect()
}

/// Choose λ by k-fold contiguous cross-validation over a log-spaced grid
/// from `lambda_max` down to `1e-3 · lambda_max`. Returns `(λ, grid scores)`.
pub fn cv_lambda(fm: &FeatureMatrix, folds: usize, n_lambdas: usize) -> Result<(f64, Vec<(f64, f64)>)> {
    if folds < 2 || fm.n_rows() < 2 * folds {
        return Err(Error::TooFewRows { needed: 2 * folds.max(2), got: fm.n_rows() });
    }
    let lmax = lambda_max(fm);
    if lmax == 0.0 {
        return Ok((0.0, vec![(0.0, 0.0)]));
    }
    let labels = contiguous_folds(fm.n_rows(), folds);
    let grid: Vec<f64> =
        (0..n_lambdas).map(|i| lmax * 10f64.powf(-3.0 * i as f64 / (n_lambdas.max(2) - 1) as f64)).collect();
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        let mut sse = 0.0;
        for f in 0..folds {
            let (train, test): (Vec<usize>, Vec<usize>) = (0..fm.n_rows()).partition(|&i| labels[i] != f);
            let mse = fit_lasso(&fm.select_rows(&train), lambda).and_then(|m| {
                let tf = fm.select_rows(&test);
                let pred = m.predict(&tf)?;
                Ok(pred.iter().zip(&tf.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            });
            sse += mse.unwrap_or(f64::INFINITY);
        }
        scores.push((lambda, sse / fm.n_rows() as f64));
    }
    let best = scores.iter().fold((f64::NAN, f64::INFINITY), |acc, &(l, s)| if s < acc.1 { (l, s) } else { acc });
    Ok((if best.0.is_nan() { grid[0] } else { best.0 }, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_problem(n: usize, p: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let beta: Vec<f64> = (0..p).map(|j| if j % 2 == 0 { 1.5 / (j + 1) as f64 } else { 0.0 }).collect();
        let y = rows
            .iter()
            .map(|r| {
                0.7 + r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()
                    + 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            })
            .collect();
        FeatureMatrix::from_rows((0..p).map(|j| format!("x{j}")).collect(), &rows, y).unwrap()
    }

    fn ols(fm: &FeatureMatrix) -> Vec<f64> {
        let n = fm.n_rows();
        let p = fm.n_cols();
        let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { fm.get(i, j - 1) });
        let y = DVector::from_vec(fm.y.clone());
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * y;
        xtx.lu().solve(&xty).unwrap().iter().copied().collect()
    }

    #[test]
    fn zero_penalty_matches_normal_equations() {
        let fm = random_problem(200, 5, 1);
        let m = fit_lasso(&fm, 0.0).unwrap();
        let reference = ols(&fm);
        assert!((m.intercept - reference[0]).abs() < 1e-6);
        for (b, r) in m.beta.iter().zip(&reference[1..]) {
            assert!((b - r).abs() < 1e-6, "{b} vs {r}");
        }
    }

    #[test]
    fn penalty_above_lambda_max_zeroes_everything() {
        let fm = random_problem(100, 4, 2);
        let m = fit_lasso(&fm, lambda_max(&fm) * (1.0 + 1e-12)).unwrap();
        assert!(m.beta.iter().all(|&b| b == 0.0));
        let ybar = fm.y.iter().sum::<f64>() / fm.n_rows() as f64;
        assert!((m.intercept - ybar).abs() < 1e-12);
    }

    fn objective(fm: &FeatureMatrix, m: &LassoModel) -> f64 {
        let pred = m.predict(fm).unwrap();
        let n = fm.n_rows() as f64;
        let rss: f64 = pred.iter().zip(&fm.y).map(|(a, b)| (a - b).powi(2)).sum();
        rss / (2.0 * n) + m.lambda * m.standardized_beta().iter().map(|b| b.abs()).sum::<f64>()
    }

    #[test]
    fn duplicate_column_matches_single_column_objective() {
        let fm = random_problem(150, 2, 3);
        let rows: Vec<Vec<f64>> = (0..fm.n_rows()).map(|i| vec![fm.get(i, 0), fm.get(i, 0), fm.get(i, 1)]).collect();
        let dup = FeatureMatrix::from_rows(vec!["a".into(), "a2".into(), "b".into()], &rows, fm.y.clone()).unwrap();
        let lambda = 0.05;
        let m_dup = fit_lasso(&dup, lambda).unwrap();
        let m_one = fit_lasso(&fm, lambda).unwrap();
        assert!(m_dup.beta.iter().all(|b| b.is_finite()));
        assert!((objective(&dup, &m_dup) - objective(&fm, &m_one)).abs() < 1e-9);
    }

    #[test]
    fn zero_beta_model_predicts_intercept() {
        let fm = random_problem(10, 2, 4);
        let m = LassoModel {
            column_names: fm.column_names.clone(),
            beta: vec![0.0, 0.0],
            intercept: 2.0,
            lambda: 0.0,
            means: vec![0.0; 2],
            sds: vec![1.0; 2],
            sweeps: 0,
        };
        assert_eq!(m.predict(&fm).unwrap(), vec![2.0; 10]);
        let mut swapped = fm.clone();
        swapped.column_names.reverse();
        assert!(matches!(m.predict(&swapped), Err(Error::ColumnMismatch { .. })));
    }

    #[test]
    fn constant_column_gets_zero_coefficient() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![3.0, i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| 2.0 * i as f64 + 1.0).collect();
        let fm = FeatureMatrix::from_rows(vec!["c".into(), "t".into()], &rows, y).unwrap();
        let m = fit_lasso(&fm, 0.0).unwrap();
        assert_eq!(m.beta[0], 0.0);
        assert!((m.beta[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn cross_validation_picks_grid_value() {
        let fm = random_problem(200, 6, 9);
        let (lambda, scores) = cv_lambda(&fm, 5, 20).unwrap();
        assert_eq!(scores.len(), 20);
        assert!(scores.iter().any(|(l, _)| *l == lambda));
        assert!(lambda < lambda_max(&fm));
    }
}
