use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::{read_text, CommonArgs, RunDir};
use crate::bayes::{
    fit_student_t_regression, gibbs_gaussian_regression, posterior_predictive, posterior_summary, summarize,
    trace_diagnostics, McmcChain, McmcOptions, ModelKind, RegressionPrior, INTERCEPT,
};
use crate::copula::{
    copula_pdf, jittered_pseudo_observations, kendall_tau, pseudo_observations, value_at_risk_tail, CopulaFamily,
    CopulaParams, JointModel, Marginal, Tail,
};
use crate::data::{load_sales_csv, synthesize_panel, CsvSchema, DateFormat, GeneratorParams, SalesPanel, SplitSpec};
use crate::date::Day;
use crate::error::{Error, Result};
use crate::evaluation::{
    backtest_stores, fit_method_model, parse_methods, BacktestConfig, BacktestReport, BlendFit, Method,
};
use crate::features::{FeatureMatrix, MEAN_LOG_SALES, PROMO};
use crate::forecast::{GbtParams, ModelDocument};
use crate::report::{backtest_csv, emit_flat_csv, emit_json, kernel_density, PlotData, PlotSpec, Series};
use crate::vine::{fit_cvine, sample_cvine, PairFamily};

/// Input panel: a CSV file, or a synthetic panel when `--input` is absent.
#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DataArgs {
    /// Sales CSV (Store, Date, Sales, Customers, Open, Promo)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Date format of the input: iso or dmy
    #[arg(long, default_value = "iso")]
    pub date_format: String,
    #[arg(long, default_value_t = 42)]
    pub synth_seed: u64,
    #[arg(long, default_value_t = 3)]
    pub synth_stores: usize,
    #[arg(long, default_value_t = 730)]
    pub synth_days: usize,
    /// Generator profile: default or calendar
    #[arg(long, default_value = "default")]
    pub synth_profile: String,
}

/// Split and model hyperparameters shared by the forecasting commands.
#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    #[arg(long, default_value_t = 2)]
    pub validation_months: u32,
    /// Last training date (YYYY-MM-DD); overrides --validation-months
    #[arg(long)]
    pub cutoff_date: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub arima_max_p: usize,
    #[arg(long, default_value_t = 1)]
    pub arima_max_d: usize,
    #[arg(long, default_value_t = 2)]
    pub arima_max_q: usize,
    #[arg(long, default_value_t = 200)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 4)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.8)]
    pub subsample: f64,
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    /// Blend weights fitted on: window (end of training) or validation
    #[arg(long, default_value = "window")]
    pub blend_fit: String,
    #[arg(long, default_value_t = 0.2)]
    pub blend_window_frac: f64,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    #[arg(long, default_value_t = 20)]
    pub cv_lambdas: usize,
    #[arg(long, default_value_t = 5)]
    pub stack_folds: usize,
    /// Fixed level-1 LASSO penalty for stacking; cross-validated when absent
    #[arg(long)]
    pub stack_lambda: Option<f64>,
}

impl ModelArgs {
    fn split(&self) -> Result<SplitSpec> {
        let cutoff_date = match &self.cutoff_date {
            None => None,
            Some(s) => Some(Day::parse_iso(s).ok_or_else(|| Error::InvalidArgument(format!("bad cutoff date `{s}`")))?),
        };
        Ok(SplitSpec { validation_months: self.validation_months, cutoff_date })
    }

    fn config(&self) -> Result<BacktestConfig> {
        let blend_fit: BlendFit = self.blend_fit.parse()?;
        Ok(BacktestConfig {
            arima_max_p: self.arima_max_p,
            arima_max_d: self.arima_max_d,
            arima_max_q: self.arima_max_q,
            gbt: GbtParams {
                n_trees: self.n_trees,
                max_depth: self.max_depth,
                learning_rate: self.learning_rate,
                subsample: self.subsample,
                min_leaf: self.min_leaf,
                ..GbtParams::default()
            },
            blend_fit,
            blend_window_frac: self.blend_window_frac,
            cv_folds: self.cv_folds,
            cv_lambdas: self.cv_lambdas,
            stack_folds: self.stack_folds,
            stack_level1_lambda: self.stack_lambda,
            ..BacktestConfig::default()
        })
    }
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 3)]
    pub stores: usize,
    #[arg(long, default_value_t = 730)]
    pub days: usize,
    /// Generator profile: default or calendar
    #[arg(long, default_value = "default")]
    pub profile: String,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct IngestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "iso")]
    pub date_format: String,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ForecastArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Store id; the first store of the panel when absent
    #[arg(long)]
    pub store: Option<u32>,
    /// One of arima, lasso, gbt, gbt_ts, gbt_iid, blend, stack
    #[arg(long, default_value = "arima")]
    pub method: String,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EnsembleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub store: Option<u32>,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BacktestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Comma-separated store ids
    #[arg(long, value_delimiter = ',')]
    pub store: Vec<u32>,
    #[arg(long)]
    pub all_stores: bool,
    #[arg(long, default_value = "arima,gbt,blend")]
    pub methods: String,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CopulaFitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Comma-separated store ids; all stores when absent
    #[arg(long, value_delimiter = ',')]
    pub store: Vec<u32>,
    /// Two of: logSales, customers, logCustomers, meanLogSales, promo
    #[arg(long, default_value = "logSales,logCustomers")]
    pub columns: String,
    /// gaussian or t
    #[arg(long, default_value = "t")]
    pub family: String,
    /// Rows kept after seeded subsampling
    #[arg(long, default_value_t = 5000)]
    pub max_rows: usize,
    /// Side length of the density grid
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CopulaSampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    /// model.json written by copula-fit
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.95)]
    pub var_level: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct VineFitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',')]
    pub store: Vec<u32>,
    #[arg(long, default_value = "logSales,logCustomers,promo,meanLogSales")]
    pub columns: String,
    /// Allowed pair-copula families
    #[arg(long, default_value = "independence,gaussian,t")]
    pub families: String,
    #[arg(long, default_value_t = 5000)]
    pub max_rows: usize,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BayesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',')]
    pub store: Vec<u32>,
    #[arg(long, default_value_t = 11000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 5000)]
    pub max_rows: usize,
    #[arg(long, default_value_t = 10000)]
    pub predictive_draws: usize,
    /// Lower-tail level for the predictive value at risk
    #[arg(long, default_value_t = 0.95)]
    pub var_level: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReportArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    /// Directory of an earlier run holding report.json
    #[arg(long)]
    pub from: PathBuf,
}

fn generator(profile: &str) -> Result<GeneratorParams> {
    match profile {
        "default" => Ok(GeneratorParams::default()),
        "calendar" => Ok(GeneratorParams::calendar_dominated()),
        other => Err(Error::InvalidArgument(format!("unknown generator profile `{other}`"))),
    }
}

fn date_format(s: &str) -> Result<DateFormat> {
    match s {
        "iso" => Ok(DateFormat::Iso),
        "dmy" => Ok(DateFormat::Dmy),
        other => Err(Error::InvalidArgument(format!("unknown date format `{other}`"))),
    }
}

fn read_csv_panel(path: &PathBuf, fmt: &str) -> Result<SalesPanel> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let schema = CsvSchema { date_format: date_format(fmt)?, ..CsvSchema::default() };
    load_sales_csv(BufReader::new(file), &schema)
}

fn load_panel(d: &DataArgs, run: &mut RunDir) -> Result<SalesPanel> {
    let panel = match &d.input {
        Some(path) => read_csv_panel(path, &d.date_format)?,
        None => {
            run.log(format!(
                "no --input; synthetic panel seed {} stores {} days {} profile {}",
                d.synth_seed, d.synth_stores, d.synth_days, d.synth_profile
            ));
            synthesize_panel(d.synth_seed, d.synth_stores, d.synth_days, &generator(&d.synth_profile)?)?
        }
    };
    run.log(format!("panel: {} rows, {} stores", panel.len(), panel.store_ids().len()));
    Ok(panel)
}

fn csv_string(rows: impl IntoIterator<Item = Vec<String>>, header: &[&str], comment: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(format!("# {comment}\n{}", String::from_utf8(body).expect("csv output is utf-8")))
}

fn write_reports<T: Serialize>(run: &mut RunDir, report: &T) -> Result<()> {
    run.write("report.json", emit_json(report)?)?;
    run.write("report.csv", emit_flat_csv(report)?)
}

fn day_axis(days: &[Day]) -> Vec<f64> {
    days.iter().map(|d| f64::from(d.0)).collect()
}

fn panel_summary(panel: &SalesPanel) -> Value {
    let mut stores = BTreeMap::new();
    for s in panel.store_ids() {
        let rows = panel.store(s).expect("listed store");
        let logs: Vec<f64> = rows.iter().filter(|r| r.open && r.sales > 0.0).map(|r| r.sales.ln()).collect();
        let mean = if logs.is_empty() { Value::Null } else { json!(logs.iter().sum::<f64>() / logs.len() as f64) };
        stores.insert(
            s.to_string(),
            json!({
                "rows": rows.len(),
                "open_days": rows.iter().filter(|r| r.open).count(),
                "promo_days": rows.iter().filter(|r| r.promo).count(),
                "mean_log_sales": mean,
            }),
        );
    }
    let (first, last) = panel.date_range().map(|(a, b)| (a.to_string(), b.to_string())).unzip();
    json!({
        "rows": panel.len(),
        "n_stores": stores.len(),
        "first_date": first,
        "last_date": last,
        "stores": stores,
    })
}

fn panel_figure(panel: &SalesPanel) -> PlotSpec {
    let series = panel
        .store_ids()
        .into_iter()
        .take(5)
        .map(|s| {
            let (x, y): (Vec<f64>, Vec<f64>) = panel
                .store(s)
                .expect("listed store")
                .iter()
                .filter(|r| r.open && r.sales > 0.0)
                .map(|r| (f64::from(r.date.0), r.sales.ln()))
                .unzip();
            Series::new(format!("store {s}"), x, y)
        })
        .filter(|s| !s.x.is_empty())
        .collect();
    PlotSpec::new("Daily log-sales", "date", "log sales", PlotData::Line(series)).with_date_axis()
}

fn write_panel_outputs(run: &mut RunDir, panel: &SalesPanel, command: &str, seed: Option<u64>) -> Result<()> {
    let mut buf = Vec::new();
    panel.write_csv(&mut buf)?;
    run.write("panel.csv", buf)?;
    let mut report = panel_summary(panel);
    report["command"] = json!(command);
    if let Some(seed) = seed {
        report["seed"] = json!(seed);
    }
    write_reports(run, &report)?;
    run.figure("log_sales", &panel_figure(panel))
}

pub fn synth(a: &SynthArgs, run: &mut RunDir) -> Result<()> {
    let panel = synthesize_panel(a.common.seed, a.stores, a.days, &generator(&a.profile)?)?;
    write_panel_outputs(run, &panel, "synth", Some(a.common.seed))
}

pub fn ingest(a: &IngestArgs, run: &mut RunDir) -> Result<()> {
    let panel = read_csv_panel(&a.input, &a.date_format)?;
    run.log(format!("read {}", a.input.display()));
    write_panel_outputs(run, &panel, "ingest", None)
}

fn default_store(panel: &SalesPanel, store: Option<u32>) -> Result<u32> {
    match store {
        Some(s) => Ok(s),
        None => panel.store_ids().first().copied().ok_or(Error::EmptyInput),
    }
}

/// Backtest report document shared by forecast, blend, stack and backtest.
fn forecast_document(command: &str, seed: u64, results: &[(u32, Result<BacktestReport>)]) -> Value {
    let reports: Vec<&BacktestReport> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let errors: BTreeMap<String, String> =
        results.iter().filter_map(|(s, r)| r.as_ref().err().map(|e| (s.to_string(), e.to_string()))).collect();
    json!({ "command": command, "seed": seed, "reports": reports, "errors": errors })
}

fn forecast_figure(r: &BacktestReport, history: &[(Day, f64)]) -> PlotSpec {
    let (mut hx, mut hy): (Vec<f64>, Vec<f64>) = history.iter().map(|(d, v)| (f64::from(d.0), *v)).unzip();
    let vx = day_axis(&r.validation_dates);
    hx.extend(&vx);
    hy.extend(&r.actual);
    let mut series = vec![Series::new("actual", hx, hy)];
    for (name, m) in &r.methods {
        if m.rmse.is_some() {
            series.push(Series::new(name.clone(), vx.clone(), m.predictions.clone()));
        }
    }
    PlotSpec::new(format!("Store {} validation forecasts", r.store_id), "date", "log sales", PlotData::Line(series))
        .with_date_axis()
}

fn rmse_figure(r: &BacktestReport) -> Option<PlotSpec> {
    let bars: Vec<(String, f64)> = r.methods.iter().filter_map(|(k, m)| m.rmse.map(|v| (k.clone(), v))).collect();
    (!bars.is_empty())
        .then(|| PlotSpec::new(format!("Store {} validation RMSE", r.store_id), "method", "RMSE", PlotData::Bars(bars)))
}

fn training_tail(panel: &SalesPanel, r: &BacktestReport, len: usize) -> Vec<(Day, f64)> {
    let rows: Vec<(Day, f64)> = panel
        .store(r.store_id)
        .map(|rows| {
            rows.iter()
                .filter(|x| x.open && x.sales > 0.0 && x.date <= r.train_end)
                .map(|x| (x.date, x.sales.ln()))
                .collect()
        })
        .unwrap_or_default();
    rows[rows.len().saturating_sub(len)..].to_vec()
}

fn run_forecast(
    run: &mut RunDir,
    command: &str,
    common: &CommonArgs,
    panel: &SalesPanel,
    stores: &[u32],
    methods: &BTreeSet<Method>,
    model: &ModelArgs,
    saved: &[Method],
) -> Result<()> {
    let split = model.split()?;
    let config = model.config()?;
    let seed = common.seed;
    let results = backtest_stores(panel, stores, methods, &split, seed, &config);
    for (s, r) in &results {
        match r {
            Ok(rep) => {
                for (name, m) in &rep.methods {
                    match (m.rmse, &m.error) {
                        (Some(v), _) => run.log(format!("store {s} {name}: rmse {v:.6}")),
                        (None, Some(e)) => run.log(format!("store {s} {name}: failed: {e}")),
                        _ => {}
                    }
                }
            }
            Err(e) => run.log(format!("store {s}: {e}")),
        }
    }
    if results.iter().all(|(_, r)| r.is_err()) {
        let (s, r) = &results[0];
        return Err(Error::InvalidArgument(format!("store {s}: {}", r.as_ref().err().expect("all failed"))));
    }
    let doc = forecast_document(command, seed, &results);
    run.write("report.json", emit_json(&doc)?)?;
    let reports: Vec<BacktestReport> = results.iter().filter_map(|(_, r)| r.as_ref().ok().cloned()).collect();
    run.write("report.csv", backtest_csv(&reports)?)?;
    for r in &reports {
        run.figure(&format!("forecast_{}", r.store_id), &forecast_figure(r, &training_tail(panel, r, 60)))?;
        if let Some(spec) = rmse_figure(r) {
            run.figure(&format!("rmse_{}", r.store_id), &spec)?;
        }
    }
    if !saved.is_empty() {
        let store = reports[0].store_id;
        let mut models = BTreeMap::new();
        for &m in saved {
            match fit_method_model(panel, store, m, &split, seed, &config) {
                Ok(model) => {
                    models.insert(m.name().to_string(), model);
                }
                Err(e) => run.log(format!("model {m} not saved: {e}")),
            }
        }
        run.write("model.json", ModelDocument::new(models).to_json()? + "\n")?;
    }
    Ok(())
}

pub fn forecast(a: &ForecastArgs, run: &mut RunDir) -> Result<()> {
    let method: Method = a.method.parse()?;
    let panel = load_panel(&a.data, run)?;
    let store = default_store(&panel, a.store)?;
    run_forecast(run, "forecast", &a.common, &panel, &[store], &BTreeSet::from([method]), &a.model, &[method])
}

pub fn blend(a: &EnsembleArgs, run: &mut RunDir) -> Result<()> {
    let panel = load_panel(&a.data, run)?;
    let store = default_store(&panel, a.store)?;
    let methods = [Method::Arima, Method::GbtIid, Method::Blend];
    run_forecast(run, "blend", &a.common, &panel, &[store], &methods.into_iter().collect(), &a.model, &methods)
}

pub fn stack(a: &EnsembleArgs, run: &mut RunDir) -> Result<()> {
    let panel = load_panel(&a.data, run)?;
    let store = default_store(&panel, a.store)?;
    let methods = [Method::Lasso, Method::GbtIid, Method::Stack];
    run_forecast(run, "stack", &a.common, &panel, &[store], &methods.into_iter().collect(), &a.model, &methods)
}

pub fn backtest(a: &BacktestArgs, run: &mut RunDir) -> Result<()> {
    let methods = parse_methods(&a.methods)?;
    let panel = load_panel(&a.data, run)?;
    let stores = if a.all_stores {
        panel.store_ids()
    } else if a.store.is_empty() {
        vec![default_store(&panel, None)?]
    } else {
        a.store.clone()
    };
    run_forecast(run, "backtest", &a.common, &panel, &stores, &methods, &a.model, &[])
}

/// Per-row variables available to the dependence models.
pub const VARIABLES: [&str; 5] = ["logSales", "customers", "logCustomers", "meanLogSales", "promo"];

/// Extract named columns over open days with positive sales and customers.
pub fn variable_columns(panel: &SalesPanel, stores: &[u32], names: &[String]) -> Result<Vec<Vec<f64>>> {
    for n in names {
        if !VARIABLES.contains(&n.as_str()) {
            return Err(Error::InvalidArgument(format!("unknown column `{n}`; expected one of {VARIABLES:?}")));
        }
    }
    let stores = if stores.is_empty() { panel.store_ids() } else { stores.to_vec() };
    let mut cols = vec![Vec::new(); names.len()];
    for s in stores {
        let rows: Vec<_> = panel.store(s)?.iter().filter(|r| r.open && r.sales > 0.0 && r.customers > 0).collect();
        if rows.is_empty() {
            continue;
        }
        let mean = rows.iter().map(|r| r.sales.ln()).sum::<f64>() / rows.len() as f64;
        for r in rows {
            for (c, n) in cols.iter_mut().zip(names) {
                c.push(match n.as_str() {
                    "logSales" => r.sales.ln(),
                    "customers" => f64::from(r.customers),
                    "logCustomers" => f64::from(r.customers).ln(),
                    "meanLogSales" => mean,
                    _ => f64::from(u8::from(r.promo)),
                });
            }
        }
    }
    if cols[0].is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(cols)
}

/// Keep at most `max_rows` rows, chosen uniformly without replacement and
/// kept in their original order.
fn subsample_rows(cols: Vec<Vec<f64>>, max_rows: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = cols[0].len();
    if n <= max_rows {
        return cols;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, max_rows).into_vec();
    idx.sort_unstable();
    cols.into_iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect()
}

fn split_names(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn histogram(title: &str, label: &str, values: Vec<f64>) -> PlotSpec {
    PlotSpec::new(title, label, "count", PlotData::Histogram { values, bins: 40 })
}

pub fn copula_fit(a: &CopulaFitArgs, run: &mut RunDir) -> Result<()> {
    let family: CopulaFamily = a.family.parse()?;
    let names = split_names(&a.columns);
    if names.len() != 2 {
        return Err(Error::InvalidArgument("--columns needs exactly two names".into()));
    }
    let panel = load_panel(&a.data, run)?;
    let cols = subsample_rows(variable_columns(&panel, &a.store, &names)?, a.max_rows, a.common.seed);
    let n = cols[0].len();
    run.log(format!("fitting {} copula on {n} rows", a.family));
    let (model, fit) = JointModel::fit(&cols, &names, family)?;
    let pobs = pseudo_observations(&cols)?;
    let tau = kendall_tau(pobs.column(0), pobs.column(1))?;

    let g = a.grid.max(2);
    let axis: Vec<f64> = (0..g).map(|i| (i as f64 + 0.5) / g as f64).collect();
    let mut z = Vec::with_capacity(g);
    let mut grid_rows = Vec::with_capacity(g * g);
    for &v in &axis {
        let mut row = Vec::with_capacity(g);
        for &u in &axis {
            let d = copula_pdf(&model.copula, u, v)?;
            grid_rows.push(vec![u.to_string(), v.to_string(), d.to_string()]);
            row.push(d);
        }
        z.push(row);
    }
    let marginals: Vec<Value> = model
        .marginals
        .iter()
        .zip(&names)
        .map(|(m, name)| match m {
            Marginal::Gamma(gm) => {
                json!({"column": name, "shape": gm.shape, "scale": gm.scale, "mean": gm.mean(), "variance": gm.variance()})
            }
            Marginal::Empirical { sorted } => json!({"column": name, "empirical_n": sorted.len()}),
        })
        .collect();
    let k = fit.params.n_params() as f64;
    let report = json!({
        "command": "copula-fit",
        "seed": a.common.seed,
        "family": a.family.to_ascii_lowercase(),
        "params": fit.params,
        "log_likelihood": fit.log_likelihood,
        "start_log_likelihood": fit.start_log_likelihood,
        "aic": 2.0 * k - 2.0 * fit.log_likelihood,
        "n": n,
        "kendall_tau": tau,
        "columns": names,
        "marginals": marginals,
    });
    write_reports(run, &report)?;
    run.write("model.json", emit_json(&model)?)?;
    run.write(
        "density_grid.csv",
        csv_string(grid_rows, &["u", "v", "density"], "copula density on a regular grid of cell centres")?,
    )?;
    let title = format!("{} copula density", a.family);
    run.figure("density", &PlotSpec::new(title, "u", "v", PlotData::Heatmap { x: axis.clone(), y: axis, z }))?;
    let scatter = Series::new("pseudo-observations", pobs.column(0).to_vec(), pobs.column(1).to_vec());
    run.figure(
        "pseudo_observations",
        &PlotSpec::new("Pseudo-observations", names[0].clone(), names[1].clone(), PlotData::Scatter(vec![scatter])),
    )?;
    for (c, name) in cols.into_iter().zip(&names) {
        run.figure(&format!("hist_{name}"), &histogram(&format!("{name} distribution"), name, c))?;
    }
    Ok(())
}

pub fn copula_sample(a: &CopulaSampleArgs, run: &mut RunDir) -> Result<()> {
    let model: JointModel = serde_json::from_str(&read_text(&a.model)?)?;
    let cols = model.sample(a.n, a.common.seed)?;
    run.log(format!("drew {} samples from {}", a.n, a.model.display()));
    let mut columns = BTreeMap::new();
    for (c, name) in cols.iter().zip(&model.column_names) {
        let s = summarize(c)?;
        columns.insert(
            name.clone(),
            json!({
                "summary": s,
                "var_upper": value_at_risk_tail(c, a.var_level, Tail::Upper)?,
                "var_lower": value_at_risk_tail(c, a.var_level, Tail::Lower)?,
            }),
        );
    }
    let report = json!({
        "command": "copula-sample",
        "seed": a.common.seed,
        "n": a.n,
        "var_level": a.var_level,
        "copula": model.copula,
        "columns": columns,
    });
    write_reports(run, &report)?;
    let rows = (0..a.n).map(|i| cols.iter().map(|c| c[i].to_string()).collect());
    let header: Vec<&str> = model.column_names.iter().map(String::as_str).collect();
    run.write("samples.csv", csv_string(rows, &header, "draws from the fitted joint model")?)?;
    let scatter = Series::new("samples", cols[0].clone(), cols[1].clone());
    run.figure(
        "samples",
        &PlotSpec::new(
            "Joint model samples",
            model.column_names[0].clone(),
            model.column_names[1].clone(),
            PlotData::Scatter(vec![scatter]),
        ),
    )?;
    for (c, name) in cols.into_iter().zip(&model.column_names) {
        run.figure(&format!("hist_{name}"), &histogram(&format!("Sampled {name}"), name, c))?;
    }
    Ok(())
}

/// Columns with this many distinct values or fewer are treated as discrete
/// and jittered before ranking.
pub const DISCRETE_MAX_LEVELS: usize = 20;

fn family_name(f: PairFamily) -> String {
    serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

pub fn vine_fit(a: &VineFitArgs, run: &mut RunDir) -> Result<()> {
    let names = split_names(&a.columns);
    let allowed: BTreeSet<PairFamily> = split_names(&a.families).iter().map(|f| f.parse()).collect::<Result<_>>()?;
    let panel = load_panel(&a.data, run)?;
    let cols = subsample_rows(variable_columns(&panel, &a.store, &names)?, a.max_rows, a.common.seed);
    let discrete: Vec<usize> = cols
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let mut s = c.to_vec();
            s.sort_by(f64::total_cmp);
            s.dedup();
            s.len() <= DISCRETE_MAX_LEVELS
        })
        .map(|(j, _)| j)
        .collect();
    let pobs = jittered_pseudo_observations(&cols, &discrete, a.common.seed)?;
    let mut spec = fit_cvine(&pobs, &allowed, &names)?;
    spec.jittered = discrete.iter().map(|&j| names[j].clone()).collect();
    for tree in &spec.trees {
        for e in tree {
            run.log(format!("edge {}: {} tau {:.4}", e.label, family_name(e.copula.family()), e.tau));
        }
    }
    let sim = sample_cvine(&spec, a.samples, a.common.seed.wrapping_add(1))?;
    let d = names.len();
    let mut tau_matrix = vec![vec![1.0; d]; d];
    let mut sim_tau = vec![vec![1.0; d]; d];
    for i in 0..d {
        for j in i + 1..d {
            tau_matrix[i][j] = kendall_tau(pobs.column(i), pobs.column(j))?;
            tau_matrix[j][i] = tau_matrix[i][j];
            sim_tau[i][j] = kendall_tau(sim.column(i), sim.column(j))?;
            sim_tau[j][i] = sim_tau[i][j];
        }
    }
    let report = json!({
        "command": "vine-fit",
        "seed": a.common.seed,
        "vine": spec,
        "kendall_tau": tau_matrix,
        "sample_kendall_tau": sim_tau,
        "samples": a.samples,
    });
    run.write("report.json", emit_json(&report)?)?;
    let edge_rows = spec.trees.iter().flatten().map(|e| {
        let (rho, nu) = match e.copula.as_params() {
            Some(p) => (
                p.rho().to_string(),
                match p {
                    CopulaParams::StudentT(t) => t.nu.to_string(),
                    _ => String::new(),
                },
            ),
            None => (String::new(), String::new()),
        };
        vec![
            (e.tree + 1).to_string(),
            e.label.clone(),
            family_name(e.copula.family()),
            rho,
            nu,
            e.tau.to_string(),
            e.log_likelihood.to_string(),
            e.aic.to_string(),
        ]
    });
    run.write(
        "report.csv",
        csv_string(
            edge_rows.collect::<Vec<_>>(),
            &["tree", "edge", "family", "rho", "nu", "tau", "log_likelihood", "aic"],
            "one row per vine edge; rho and nu are empty for independence edges",
        )?,
    )?;
    run.write("model.json", spec.to_json()? + "\n")?;
    let sim_rows = (0..sim.n()).map(|i| sim.row(i).iter().map(|v| v.to_string()).collect());
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    run.write("samples.csv", csv_string(sim_rows, &header, "uniform-scale draws from the fitted vine")?)?;
    let axis: Vec<f64> = (0..d).map(|i| i as f64).collect();
    run.figure(
        "kendall_tau",
        &PlotSpec::new(
            "Kendall's tau (variable index)",
            "variable",
            "variable",
            PlotData::Heatmap { x: axis.clone(), y: axis, z: tau_matrix },
        ),
    )?;
    let r0 = spec.order[0];
    for j in (0..d).filter(|&j| j != r0) {
        let observed = Series::new("data", pobs.column(r0).to_vec(), pobs.column(j).to_vec());
        let sampled = Series::new("vine", sim.column(r0).to_vec(), sim.column(j).to_vec());
        run.figure(
            &format!("pairs_{}_{}", names[r0], names[j]),
            &PlotSpec::new(
                format!("{} vs {}", names[r0], names[j]),
                names[r0].clone(),
                names[j].clone(),
                PlotData::Scatter(vec![observed, sampled]),
            ),
        )?;
    }
    Ok(())
}

/// Regression design `logSales ~ meanLogSales + Promo` over open days.
fn bayes_design(panel: &SalesPanel, stores: &[u32], max_rows: usize, seed: u64) -> Result<FeatureMatrix> {
    let names: Vec<String> = ["logSales", "meanLogSales", "promo"].map(String::from).to_vec();
    let cols = subsample_rows(variable_columns(panel, stores, &names)?, max_rows, seed);
    let rows: Vec<Vec<f64>> = (0..cols[0].len()).map(|i| vec![cols[1][i], cols[2][i]]).collect();
    FeatureMatrix::from_rows(vec![MEAN_LOG_SALES.into(), PROMO.into()], &rows, cols[0].clone())
}

fn run_bayes(a: &BayesArgs, run: &mut RunDir, kind: ModelKind) -> Result<()> {
    let panel = load_panel(&a.data, run)?;
    let fm = bayes_design(&panel, &a.store, a.max_rows, a.common.seed)?;
    let prior = RegressionPrior::weak(fm.n_cols() + 1);
    let opts = McmcOptions { iters: a.iters, burn_in: a.burn_in, seed: a.common.seed };
    run.log(format!("{kind} regression on {} rows, {} iterations", fm.n_rows(), a.iters));
    let chain: McmcChain = match kind {
        ModelKind::Gaussian => gibbs_gaussian_regression(&fm, &prior, &opts)?,
        ModelKind::StudentT => fit_student_t_regression(&fm, &prior, &opts)?,
    };
    for w in &chain.warnings {
        run.log(format!("warning: {w}"));
    }
    let summary = posterior_summary(&chain)?;
    let diagnostics = match trace_diagnostics(&chain) {
        Ok(d) => json!(d),
        Err(e) => {
            run.log(format!("diagnostics skipped: {e}"));
            json!({ "error": e.to_string() })
        }
    };
    let mean_level = fm.column(0).iter().sum::<f64>() / fm.n_rows() as f64;
    let mut predictive = BTreeMap::new();
    for promo in [0.0, 1.0] {
        let x = chain
            .coefficient_names()
            .iter()
            .map(|n| match n.as_str() {
                INTERCEPT => 1.0,
                MEAN_LOG_SALES => mean_level,
                _ => promo,
            })
            .collect::<Vec<f64>>();
        let draws = posterior_predictive(&chain, kind, &x, a.predictive_draws, a.common.seed.wrapping_add(1))?;
        let key = if promo == 1.0 { "promo" } else { "no_promo" };
        predictive.insert(
            key,
            json!({
                "x": x,
                "summary": summarize(&draws)?,
                "var_lower": value_at_risk_tail(&draws, a.var_level, Tail::Lower)?,
            }),
        );
        if promo == 1.0 {
            run.figure("predictive", &histogram("Posterior predictive log-sales on promo days", "log sales", draws))?;
        }
    }
    let report = json!({
        "command": if kind == ModelKind::Gaussian { "bayes-gaussian" } else { "bayes-student" },
        "seed": a.common.seed,
        "model": kind,
        "n": fm.n_rows(),
        "iterations": chain.n_iterations(),
        "burn_in": chain.burn_in,
        "params": chain.param_names,
        "summary": summary,
        "diagnostics": diagnostics,
        "acceptance": chain.acceptance,
        "warnings": chain.warnings,
        "predictive": predictive,
        "var_level": a.var_level,
    });
    write_reports(run, &report)?;
    let mut buf = Vec::new();
    chain.write_csv(&mut buf)?;
    run.write("chain.csv", buf)?;

    for (j, name) in chain.param_names.iter().enumerate() {
        let trace = Series::indexed(name.clone(), chain.trace(j));
        run.figure(
            &format!("trace_{name}"),
            &PlotSpec::new(format!("Trace of {name}"), "iteration", name.clone(), PlotData::Line(vec![trace])),
        )?;
        let kept = chain.kept(j);
        if let Ok(density) = kernel_density(&kept, 200) {
            let density = Series::new(name.clone(), density.x, density.y);
            run.figure(
                &format!("density_{name}"),
                &PlotSpec::new(
                    format!("Posterior of {name}"),
                    name.clone(),
                    "density",
                    PlotData::Density(vec![density]),
                ),
            )?;
        }
    }
    let boxes: Vec<(String, Vec<f64>)> =
        chain.coefficient_names().iter().enumerate().map(|(j, n)| (n.clone(), chain.kept(j))).collect();
    run.figure(
        "coefficients",
        &PlotSpec::new("Posterior coefficients", "coefficient", "value", PlotData::Boxes(boxes)),
    )?;
    let scatter = Series::new("days", fm.column(0), fm.y.clone());
    run.figure(
        "mean_vs_log_sales",
        &PlotSpec::new("Store mean vs daily log-sales", MEAN_LOG_SALES, "log sales", PlotData::Scatter(vec![scatter])),
    )
}

pub fn bayes_gaussian(a: &BayesArgs, run: &mut RunDir) -> Result<()> {
    run_bayes(a, run, ModelKind::Gaussian)
}

pub fn bayes_student(a: &BayesArgs, run: &mut RunDir) -> Result<()> {
    run_bayes(a, run, ModelKind::StudentT)
}

pub fn report(a: &ReportArgs, run: &mut RunDir) -> Result<()> {
    let source = a.from.join("report.json");
    let doc: Value = serde_json::from_str(&read_text(&source)?)?;
    run.log(format!("re-rendering {}", source.display()));
    run.write("report.json", emit_json(&doc)?)?;
    match doc.get("reports") {
        Some(reports) => {
            let reports: Vec<BacktestReport> = serde_json::from_value(reports.clone())?;
            run.write("report.csv", backtest_csv(&reports)?)?;
            for r in &reports {
                if let Some(spec) = rmse_figure(r) {
                    run.figure(&format!("rmse_{}", r.store_id), &spec)?;
                }
                run.figure(&format!("forecast_{}", r.store_id), &forecast_figure(r, &[]))?;
            }
        }
        None => run.write("report.csv", emit_flat_csv(&doc)?)?,
    }
    Ok(())
}
