//! RMSE scoring and the single-split, multi-method backtest harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{log_series, train_validation_split, SalesPanel, SeriesView, SplitSpec};
use crate::date::Day;
use crate::ensemble::{fit_blend, fit_stack, BlendModel, StackConfig};
use crate::error::{Error, Result};
use crate::features::{build_iid_features, build_ts_features, ts_column_names, ts_row, FeatureMatrix, FeatureSpec};
use crate::forecast::arima::fit_arima;
use crate::forecast::gbt::{fit_gbt, GbtModel, GbtParams};
use crate::forecast::lasso::{cv_lambda, fit_lasso};
use crate::forecast::ForecastModel;

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mse = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Arima,
    Lasso,
    GbtTs,
    GbtIid,
    Blend,
    Stack,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Arima, Method::Lasso, Method::GbtTs, Method::GbtIid, Method::Blend, Method::Stack];

    pub fn name(self) -> &'static str {
        match self {
            Method::Arima => "arima",
            Method::Lasso => "lasso",
            Method::GbtTs => "gbt_ts",
            Method::GbtIid => "gbt_iid",
            Method::Blend => "blend",
            Method::Stack => "stack",
        }
    }

    pub fn framing(self) -> &'static str {
        match self {
            Method::Arima | Method::GbtTs => "ts",
            Method::Lasso | Method::GbtIid | Method::Stack => "iid",
            Method::Blend => "ts+iid",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `gbt` alone means the i.i.d.-framed booster.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "arima" => Ok(Method::Arima),
            "lasso" => Ok(Method::Lasso),
            "gbt_ts" => Ok(Method::GbtTs),
            "gbt" | "gbt_iid" => Ok(Method::GbtIid),
            "blend" => Ok(Method::Blend),
            "stack" => Ok(Method::Stack),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

pub fn parse_methods(list: &str) -> Result<BTreeSet<Method>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// Where blend weights are estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BlendFit {
    /// Trailing slice of the training period, forecast by components fit on the rest.
    #[default]
    Window,
    /// The validation period itself (optimistic).
    Validation,
}

impl FromStr for BlendFit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window" => Ok(BlendFit::Window),
            "validation" => Ok(BlendFit::Validation),
            other => Err(Error::InvalidArgument(format!("unknown blend fit `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub arima_max_p: usize,
    pub arima_max_d: usize,
    pub arima_max_q: usize,
    pub gbt: GbtParams,
    pub ts_spec: FeatureSpec,
    pub iid_spec: FeatureSpec,
    pub blend_fit: BlendFit,
    pub blend_window_frac: f64,
    pub cv_folds: usize,
    pub cv_lambdas: usize,
    pub stack_folds: usize,
    /// Fixed first-stage penalty for stacking; chosen by cross-validation when absent.
    pub stack_level1_lambda: Option<f64>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            arima_max_p: 3,
            arima_max_d: 1,
            arima_max_q: 2,
            gbt: GbtParams::default(),
            ts_spec: FeatureSpec::ts_default(),
            iid_spec: FeatureSpec::iid_default(),
            blend_fit: BlendFit::Window,
            blend_window_frac: 0.2,
            cv_folds: 5,
            cv_lambdas: 20,
            stack_folds: 5,
            stack_level1_lambda: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub framing: String,
    pub rmse: Option<f64>,
    pub predictions: Vec<f64>,
    pub error: Option<String>,
    /// Method-specific numbers (selected order, λ, blend weights, window RMSEs).
    pub details: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub store_id: u32,
    pub seed: u64,
    pub split: SplitSpec,
    pub train_end: Day,
    pub validation_dates: Vec<Day>,
    pub actual: Vec<f64>,
    pub methods: BTreeMap<String, MethodResult>,
    pub config: BacktestConfig,
}

impl BacktestReport {
    pub fn rmse_of(&self, method: Method) -> Option<f64> {
        self.methods.get(method.name()).and_then(|m| m.rmse)
    }
}

/// Everything one fit/predict pass needs about a store's series.
struct StoreContext<'a> {
    panel: &'a SalesPanel,
    series: SeriesView,
    promo: Vec<bool>,
    config: &'a BacktestConfig,
    gbt: GbtParams,
}

impl StoreContext<'_> {
    /// ARIMA fit on the first `fit_len` points, forecasting the next `horizon`.
    fn arima(&self, fit_len: usize, horizon: usize, details: &mut BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let c = self.config;
        let train = SeriesView {
            store_id: self.series.store_id,
            dates: self.series.dates[..fit_len].to_vec(),
            log_sales: self.series.log_sales[..fit_len].to_vec(),
        };
        let model = fit_arima(&train, c.arima_max_p, c.arima_max_d, c.arima_max_q)?;
        details.insert("p".into(), model.order.p as f64);
        details.insert("d".into(), model.order.d as f64);
        details.insert("q".into(), model.order.q as f64);
        details.insert("aic".into(), model.aic);
        Ok(model.forecast(horizon))
    }

    fn iid_matrix(&self, fit_len: usize) -> Result<(FeatureMatrix, Day)> {
        let cutoff = self.series.dates[fit_len - 1];
        let stores: BTreeSet<u32> = [self.series.store_id].into_iter().collect();
        Ok((build_iid_features(self.panel, &stores, &self.config.iid_spec, cutoff)?, cutoff))
    }

    fn target_rows(&self, fm: &FeatureMatrix, fit_len: usize, horizon: usize) -> Vec<usize> {
        let wanted: BTreeSet<Day> = self.series.dates[fit_len..fit_len + horizon].iter().copied().collect();
        (0..fm.n_rows()).filter(|&i| wanted.contains(&fm.row_dates[i])).collect()
    }

    fn gbt_iid(&self, fit_len: usize, horizon: usize) -> Result<Vec<f64>> {
        let (fm, cutoff) = self.iid_matrix(fit_len)?;
        let (train_rows, _) = fm.split_at(cutoff);
        let model = fit_gbt(&fm.select_rows(&train_rows), &self.gbt)?;
        model.predict(&fm.select_rows(&self.target_rows(&fm, fit_len, horizon)))
    }

    fn lasso(&self, fit_len: usize, horizon: usize, details: &mut BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let (fm, cutoff) = self.iid_matrix(fit_len)?;
        let (train_rows, _) = fm.split_at(cutoff);
        let train = fm.select_rows(&train_rows);
        let (lambda, _) = cv_lambda(&train, self.config.cv_folds, self.config.cv_lambdas)?;
        details.insert("lambda".into(), lambda);
        fit_lasso(&train, lambda)?.predict(&fm.select_rows(&self.target_rows(&fm, fit_len, horizon)))
    }

    fn stack(&self, fit_len: usize, horizon: usize, details: &mut BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let (fm, cutoff) = self.iid_matrix(fit_len)?;
        let (train_rows, _) = fm.split_at(cutoff);
        let train = fm.select_rows(&train_rows);
        let lambda = match self.config.stack_level1_lambda {
            Some(l) => l,
            None => cv_lambda(&train, self.config.cv_folds, self.config.cv_lambdas)?.0,
        };
        details.insert("level1_lambda".into(), lambda);
        let cfg = StackConfig { level1_lambda: lambda, gbt: self.gbt, folds: self.config.stack_folds };
        fit_stack(&train, &cfg)?.predict(&fm.select_rows(&self.target_rows(&fm, fit_len, horizon)))
    }

    fn gbt_ts(&self, fit_len: usize, horizon: usize) -> Result<Vec<f64>> {
        let spec = &self.config.ts_spec;
        let train = SeriesView {
            store_id: self.series.store_id,
            dates: self.series.dates[..fit_len].to_vec(),
            log_sales: self.series.log_sales[..fit_len].to_vec(),
        };
        let fm = build_ts_features(&train, &self.promo[..fit_len], spec)?;
        let model = fit_gbt(&fm, &self.gbt)?;
        forecast_ts_recursive(
            &model,
            &train.log_sales,
            &self.series.dates[fit_len..fit_len + horizon],
            &self.promo[fit_len..fit_len + horizon],
            spec,
        )
    }
}

/// Multi-step forecast feeding each prediction back in as a lag.
pub fn forecast_ts_recursive(
    model: &GbtModel,
    history: &[f64],
    dates: &[Day],
    promo: &[bool],
    spec: &FeatureSpec,
) -> Result<Vec<f64>> {
    let expected = ts_column_names(spec);
    if model.column_names != expected {
        return Err(Error::ColumnMismatch { expected: model.column_names.clone(), got: expected });
    }
    if dates.len() != promo.len() {
        return Err(Error::LengthMismatch(dates.len(), promo.len()));
    }
    let mut hist = history.to_vec();
    let mut out = Vec::with_capacity(dates.len());
    for (&d, &p) in dates.iter().zip(promo) {
        let row = ts_row(&hist, d, p, spec)?;
        let pred = model.predict_row(&row);
        hist.push(pred);
        out.push(pred);
    }
    Ok(out)
}

fn finish(framing: &str, result: Result<Vec<f64>>, actual: &[f64], details: BTreeMap<String, f64>) -> MethodResult {
    match result.and_then(|p| rmse(actual, &p).map(|r| (p, r))) {
        Ok((predictions, r)) if r.is_finite() => {
            MethodResult { framing: framing.into(), rmse: Some(r), predictions, error: None, details }
        }
        Ok(_) => MethodResult {
            framing: framing.into(),
            rmse: None,
            predictions: vec![],
            error: Some("non-finite RMSE".into()),
            details,
        },
        Err(e) => MethodResult {
            framing: framing.into(),
            rmse: None,
            predictions: vec![],
            error: Some(e.to_string()),
            details,
        },
    }
}

/// Fit every requested method on the training side of one store's series
/// and score it on the validation side. Component failures are recorded in
/// the report instead of aborting.
pub fn backtest(
    panel: &SalesPanel,
    store: u32,
    methods: &BTreeSet<Method>,
    split: &SplitSpec,
    seed: u64,
    config: &BacktestConfig,
) -> Result<BacktestReport> {
    let series = log_series(panel, store)?;
    let (train, valid) = train_validation_split(&series, split)?;
    let promo = panel.promo_flags(&series);
    let ctx = StoreContext { panel, series, promo, config, gbt: GbtParams { seed, ..config.gbt } };
    let n_train = train.len();
    let horizon = valid.len();
    let actual = valid.log_sales.clone();

    let mut results = BTreeMap::new();
    let mut arima_details = BTreeMap::new();
    let need_arima = methods.contains(&Method::Arima) || methods.contains(&Method::Blend);
    let need_gbt_iid = methods.contains(&Method::GbtIid) || methods.contains(&Method::Blend);
    let arima_pred = need_arima.then(|| ctx.arima(n_train, horizon, &mut arima_details));
    let gbt_iid_pred = need_gbt_iid.then(|| ctx.gbt_iid(n_train, horizon));

    for &method in methods {
        let mut details = BTreeMap::new();
        let result = match method {
            Method::Arima => {
                details = arima_details.clone();
                arima_pred.clone().expect("computed above")
            }
            Method::GbtIid => gbt_iid_pred.clone().expect("computed above"),
            Method::GbtTs => ctx.gbt_ts(n_train, horizon),
            Method::Lasso => ctx.lasso(n_train, horizon, &mut details),
            Method::Stack => ctx.stack(n_train, horizon, &mut details),
            Method::Blend => blend_method(&ctx, n_train, &actual, &arima_pred, &gbt_iid_pred, &mut details),
        };
        let result = result.map_err(|e| Error::Method { method: method.name().into(), source: Box::new(e) });
        results.insert(method.name().to_string(), finish(method.framing(), result, &actual, details));
    }
    Ok(BacktestReport {
        store_id: store,
        seed,
        split: *split,
        train_end: train.last_date().expect("non-empty train"),
        validation_dates: valid.dates,
        actual,
        methods: results,
        config: config.clone(),
    })
}

fn blend_method(
    ctx: &StoreContext<'_>,
    n_train: usize,
    actual: &[f64],
    arima_pred: &Option<Result<Vec<f64>>>,
    gbt_pred: &Option<Result<Vec<f64>>>,
    details: &mut BTreeMap<String, f64>,
) -> Result<Vec<f64>> {
    let a_full = arima_pred.clone().expect("computed above")?;
    let g_full = gbt_pred.clone().expect("computed above")?;
    let (a_fit, g_fit, y_fit) = match ctx.config.blend_fit {
        BlendFit::Validation => (a_full.clone(), g_full.clone(), actual.to_vec()),
        BlendFit::Window => {
            let window = ((ctx.config.blend_window_frac * n_train as f64).ceil() as usize).clamp(3, n_train - 1);
            let inner = n_train - window;
            let mut scratch = BTreeMap::new();
            let a = ctx.arima(inner, window, &mut scratch)?;
            let g = ctx.gbt_iid(inner, window)?;
            (a, g, ctx.series.log_sales[inner..n_train].to_vec())
        }
    };
    let weights = fit_blend(&a_fit, &g_fit, &y_fit)?;
    let in_window = weights.predict(&a_fit, &g_fit)?;
    details.insert("w0".into(), weights.w0);
    details.insert("wa".into(), weights.wa);
    details.insert("wb".into(), weights.wb);
    details.insert("singular".into(), f64::from(u8::from(weights.singular)));
    details.insert("window_rmse_arima".into(), rmse(&y_fit, &a_fit)?);
    details.insert("window_rmse_gbt".into(), rmse(&y_fit, &g_fit)?);
    details.insert("window_rmse_blend".into(), rmse(&y_fit, &in_window)?);
    weights.predict(&a_full, &g_full)
}

/// Fit one method on the training side of a store's series and return the
/// fitted model. Blends are fitted as in [`backtest`].
pub fn fit_method_model(
    panel: &SalesPanel,
    store: u32,
    method: Method,
    split: &SplitSpec,
    seed: u64,
    config: &BacktestConfig,
) -> Result<ForecastModel> {
    let series = log_series(panel, store)?;
    let (train, valid) = train_validation_split(&series, split)?;
    let promo = panel.promo_flags(&series);
    let ctx = StoreContext { panel, series, promo, config, gbt: GbtParams { seed, ..config.gbt } };
    let n_train = train.len();
    let c = config;
    Ok(match method {
        Method::Arima => ForecastModel::Arima(fit_arima(&train, c.arima_max_p, c.arima_max_d, c.arima_max_q)?),
        Method::GbtTs => {
            let fm = build_ts_features(&train, &ctx.promo[..n_train], &c.ts_spec)?;
            ForecastModel::Gbt(fit_gbt(&fm, &ctx.gbt)?)
        }
        Method::GbtIid | Method::Lasso | Method::Stack => {
            let (fm, cutoff) = ctx.iid_matrix(n_train)?;
            let (rows, _) = fm.split_at(cutoff);
            let fm = fm.select_rows(&rows);
            match method {
                Method::GbtIid => ForecastModel::Gbt(fit_gbt(&fm, &ctx.gbt)?),
                Method::Lasso => ForecastModel::Lasso(fit_lasso(&fm, cv_lambda(&fm, c.cv_folds, c.cv_lambdas)?.0)?),
                _ => {
                    let lambda = match c.stack_level1_lambda {
                        Some(l) => l,
                        None => cv_lambda(&fm, c.cv_folds, c.cv_lambdas)?.0,
                    };
                    let cfg = StackConfig { level1_lambda: lambda, gbt: ctx.gbt, folds: c.stack_folds };
                    ForecastModel::Stack(fit_stack(&fm, &cfg)?)
                }
            }
        }
        Method::Blend => {
            let horizon = valid.len();
            let mut scratch = BTreeMap::new();
            let a = Some(ctx.arima(n_train, horizon, &mut scratch));
            let g = Some(ctx.gbt_iid(n_train, horizon));
            let mut details = BTreeMap::new();
            blend_method(&ctx, n_train, &valid.log_sales, &a, &g, &mut details)?;
            ForecastModel::Blend(BlendModel {
                w0: details["w0"],
                wa: details["wa"],
                wb: details["wb"],
                singular: details["singular"] != 0.0,
            })
        }
    })
}

/// Backtest several stores concurrently; output is sorted by store id.
pub fn backtest_stores(
    panel: &SalesPanel,
    stores: &[u32],
    methods: &BTreeSet<Method>,
    split: &SplitSpec,
    seed: u64,
    config: &BacktestConfig,
) -> Vec<(u32, Result<BacktestReport>)> {
    let mut out: Vec<(u32, Result<BacktestReport>)> =
        stores.par_iter().map(|&s| (s, backtest(panel, s, methods, split, seed, config))).collect();
    out.sort_by_key(|(s, _)| *s);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize_panel, GeneratorParams};

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        let y = [1.0, -2.0, 0.5];
        let yh = [0.0, -1.0, 1.5];
        let shifted = |v: &[f64]| v.iter().map(|x| x + 10.0).collect::<Vec<_>>();
        assert!((rmse(&y, &yh).unwrap() - rmse(&shifted(&y), &shifted(&yh)).unwrap()).abs() < 1e-12);
        assert_eq!(rmse(&[], &[]), Err(Error::EmptyInput));
        assert_eq!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2)));
    }

    #[test]
    fn method_names_parse() {
        let m = parse_methods("arima,gbt,blend").unwrap();
        assert_eq!(m.into_iter().collect::<Vec<_>>(), vec![Method::Arima, Method::GbtIid, Method::Blend]);
        assert!(parse_methods("arima,prophet").is_err());
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn failed_method_is_recorded_not_fatal() {
        let panel = synthesize_panel(1, 1, 200, &GeneratorParams::default()).unwrap();
        let config = BacktestConfig { arima_max_p: 30, ..BacktestConfig::default() };
        let methods: BTreeSet<Method> = [Method::Arima, Method::GbtIid].into_iter().collect();
        let report = backtest(&panel, 1, &methods, &SplitSpec::default(), 1, &config).unwrap();
        assert!(report.methods["arima"].error.is_some());
        assert!(report.methods["gbt_iid"].rmse.is_some());
    }
}
