//! Model combinations: least-squares blending of two forecasters and
//! two-stage stacking (linear first stage, boosted trees second).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::forecast::gbt::{fit_gbt_target, GbtModel, GbtParams};
use crate::forecast::lasso::{contiguous_folds, fit_lasso, LassoModel};

/// `ŷ = w0 + wa·a + wb·b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlendModel {
    pub w0: f64,
    pub wa: f64,
    pub wb: f64,
    /// Set when the normal equations were singular and equal weights were used.
    pub singular: bool,
}

/// Ordinary least squares of `y` on `[1, a, b]`, solved on centered columns.
pub fn fit_blend(pred_a: &[f64], pred_b: &[f64], y: &[f64]) -> Result<BlendModel> {
    if pred_a.len() != y.len() {
        return Err(Error::LengthMismatch(pred_a.len(), y.len()));
    }
    if pred_b.len() != y.len() {
        return Err(Error::LengthMismatch(pred_b.len(), y.len()));
    }
    let n = y.len();
    if n < 3 {
        return Err(Error::TooFewRows { needed: 3, got: n });
    }
    let nf = n as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / nf;
    let (ma, mb, my) = (mean(pred_a), mean(pred_b), mean(y));
    let (mut saa, mut sbb, mut sab, mut say, mut sby) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b, t) = (pred_a[i] - ma, pred_b[i] - mb, y[i] - my);
        saa += a * a;
        sbb += b * b;
        sab += a * b;
        say += a * t;
        sby += b * t;
    }
    let det = saa * sbb - sab * sab;
    if saa <= 0.0 || sbb <= 0.0 || det <= 1e-12 * saa * sbb {
        return Ok(BlendModel { w0: 0.0, wa: 0.5, wb: 0.5, singular: true });
    }
    let wa = (sbb * say - sab * sby) / det;
    let wb = (saa * sby - sab * say) / det;
    Ok(BlendModel { w0: my - wa * ma - wb * mb, wa, wb, singular: false })
}

impl BlendModel {
    pub fn predict(&self, pred_a: &[f64], pred_b: &[f64]) -> Result<Vec<f64>> {
        if pred_a.len() != pred_b.len() {
            return Err(Error::LengthMismatch(pred_a.len(), pred_b.len()));
        }
        Ok(pred_a.iter().zip(pred_b).map(|(a, b)| self.w0 + self.wa * a + self.wb * b).collect())
    }
}

pub fn predict_blend(model: &BlendModel, pred_a: &[f64], pred_b: &[f64]) -> Result<Vec<f64>> {
    model.predict(pred_a, pred_b)
}

pub const LEVEL1_COLUMN: &str = "level1Pred";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    /// Penalty of the first-stage linear model; zero gives plain least squares.
    pub level1_lambda: f64,
    pub gbt: GbtParams,
    pub folds: usize,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self { level1_lambda: 0.0, gbt: GbtParams::default(), folds: 5 }
    }
}

/// First-stage linear model whose out-of-fold predictions become an extra
/// column for the second-stage booster. The booster learns the first
/// stage's residual, so predictions are `level1 + level2(augmented)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackModel {
    pub level1: LassoModel,
    pub level2: GbtModel,
    pub level1_feature_name: String,
    pub folds: usize,
}

/// Fold label per row. Folds are contiguous blocks in date order (row index
/// breaks ties), so each fold covers one stretch of time.
pub fn time_folds(fm: &FeatureMatrix, folds: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fm.n_rows()).collect();
    order.sort_by_key(|&i| (fm.row_dates[i], i));
    let labels_in_order = contiguous_folds(order.len(), folds);
    let mut labels = vec![0; fm.n_rows()];
    for (pos, &row) in order.iter().enumerate() {
        labels[row] = labels_in_order[pos];
    }
    labels
}

/// Out-of-fold first-stage predictions and the fold label of each row.
pub fn out_of_fold_level1(fm: &FeatureMatrix, lambda: f64, folds: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    if folds < 2 || fm.n_rows() < 2 * folds {
        return Err(Error::TooFewRows { needed: 2 * folds.max(2), got: fm.n_rows() });
    }
    let labels = time_folds(fm, folds);
    let mut oof = vec![0.0; fm.n_rows()];
    for f in 0..folds {
        let (held, train): (Vec<usize>, Vec<usize>) = (0..fm.n_rows()).partition(|&i| labels[i] == f);
        let model = fit_lasso(&fm.select_rows(&train), lambda)?;
        let pred = model.predict(&fm.select_rows(&held))?;
        for (&i, p) in held.iter().zip(pred) {
            oof[i] = p;
        }
    }
    Ok((oof, labels))
}

pub fn fit_stack(fm: &FeatureMatrix, config: &StackConfig) -> Result<StackModel> {
    let (oof, _) = out_of_fold_level1(fm, config.level1_lambda, config.folds)?;
    let augmented = fm.with_column(LEVEL1_COLUMN, &oof)?;
    let residual: Vec<f64> = fm.y.iter().zip(&oof).map(|(y, p)| y - p).collect();
    let level2 = fit_gbt_target(&augmented, &residual, &config.gbt)?;
    let level1 = fit_lasso(fm, config.level1_lambda)?;
    Ok(StackModel { level1, level2, level1_feature_name: LEVEL1_COLUMN.to_string(), folds: config.folds })
}

impl StackModel {
    pub fn predict(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        let l1 = self.level1.predict(fm)?;
        let augmented = fm.with_column(&self.level1_feature_name, &l1)?;
        let l2 = self.level2.predict(&augmented)?;
        Ok(l1.iter().zip(l2).map(|(a, b)| a + b).collect())
    }
}

pub fn predict_stack(model: &StackModel, fm: &FeatureMatrix) -> Result<Vec<f64>> {
    model.predict(fm)
}
