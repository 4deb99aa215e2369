//! Design matrices in the two framings: lagged time-series rows, and
//! exchangeable calendar/store rows.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{SalesPanel, SeriesView};
use crate::date::Day;
use crate::error::{Error, Result};

const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];
const MONTHS: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];

pub const PROMO: &str = "Promo";
pub const MEAN_LOG_SALES: &str = "meanLogSales";
pub const MONTHDAY: &str = "monthday";

/// Named-column design matrix with a log-sales target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    /// Row-major `n_rows × column_names.len()` values.
    pub values: Vec<f64>,
    pub y: Vec<f64>,
    pub row_dates: Vec<Day>,
    pub row_stores: Vec<u32>,
}

impl FeatureMatrix {
    pub fn new(
        column_names: Vec<String>,
        values: Vec<f64>,
        y: Vec<f64>,
        row_dates: Vec<Day>,
        row_stores: Vec<u32>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if values.len() != n * column_names.len() {
            return Err(Error::LengthMismatch(values.len(), n * column_names.len()));
        }
        if row_dates.len() != n || row_stores.len() != n {
            return Err(Error::LengthMismatch(row_dates.len(), n));
        }
        let unique: BTreeSet<&String> = column_names.iter().collect();
        if unique.len() != column_names.len() {
            return Err(Error::InvalidArgument("column names must be unique".into()));
        }
        if values.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("feature matrix contains non-finite values".into()));
        }
        Ok(Self { column_names, values, y, row_dates, row_stores })
    }

    /// Convenience constructor for unlabeled rows (dates and stores zeroed).
    pub fn from_rows(column_names: Vec<String>, rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if rows.len() != n {
            return Err(Error::LengthMismatch(rows.len(), n));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != column_names.len()) {
            return Err(Error::LengthMismatch(bad.len(), column_names.len()));
        }
        let values = rows.concat();
        Self::new(column_names, values, y, vec![Day(0); n], vec![0; n])
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, j)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            column_names: self.column_names.clone(),
            values,
            y: rows.iter().map(|&i| self.y[i]).collect(),
            row_dates: rows.iter().map(|&i| self.row_dates[i]).collect(),
            row_stores: rows.iter().map(|&i| self.row_stores[i]).collect(),
        }
    }

    /// Rows dated on or before `cutoff`, and rows after it.
    pub fn split_at(&self, cutoff: Day) -> (Vec<usize>, Vec<usize>) {
        (0..self.n_rows()).partition(|&i| self.row_dates[i] <= cutoff)
    }

    /// Copy with an extra trailing column.
    pub fn with_column(&self, name: &str, column: &[f64]) -> Result<FeatureMatrix> {
        if column.len() != self.n_rows() {
            return Err(Error::LengthMismatch(column.len(), self.n_rows()));
        }
        let mut names = self.column_names.clone();
        names.push(name.to_string());
        let mut values = Vec::with_capacity(self.n_rows() * names.len());
        for (i, extra) in column.iter().enumerate() {
            values.extend_from_slice(self.row(i));
            values.push(*extra);
        }
        FeatureMatrix::new(names, values, self.y.clone(), self.row_dates.clone(), self.row_stores.clone())
    }

    pub fn ensure_columns(&self, expected: &[String]) -> Result<()> {
        if self.column_names != expected {
            return Err(Error::ColumnMismatch { expected: expected.to_vec(), got: self.column_names.clone() });
        }
        Ok(())
    }

    /// CSV with header `column_names..., target`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.column_names.clone();
        header.push("target".into());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framing {
    Ts,
    Iid,
}

impl std::fmt::Display for Framing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Framing::Ts => "ts",
            Framing::Iid => "iid",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalendarFeature {
    Weekday,
    Month,
    Monthday,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub framing: Framing,
    pub lags: BTreeSet<usize>,
    pub include_promo: bool,
    pub calendar: BTreeSet<CalendarFeature>,
}

impl FeatureSpec {
    /// Lagged log-sales plus promo; the series must carry its own seasonality.
    pub fn ts_default() -> Self {
        Self {
            framing: Framing::Ts,
            lags: [1, 7].into_iter().collect(),
            include_promo: true,
            calendar: BTreeSet::new(),
        }
    }

    /// Weekday, month and month-day encodings plus promo and the store mean.
    pub fn iid_default() -> Self {
        Self {
            framing: Framing::Iid,
            lags: BTreeSet::new(),
            include_promo: true,
            calendar: [CalendarFeature::Weekday, CalendarFeature::Month, CalendarFeature::Monthday]
                .into_iter()
                .collect(),
        }
    }

    fn max_lag(&self) -> usize {
        self.lags.iter().next_back().copied().unwrap_or(0)
    }
}

pub fn lag_column_name(lag: usize) -> String {
    if lag == 1 {
        "prevLogSales".to_string()
    } else {
        format!("lag{lag}LogSales")
    }
}

fn calendar_names(set: &BTreeSet<CalendarFeature>) -> Vec<String> {
    let mut names = Vec::new();
    for f in set {
        match f {
            CalendarFeature::Weekday => names.extend(WEEKDAYS[1..].iter().map(|d| format!("wd_{d}"))),
            CalendarFeature::Month => names.extend(MONTHS[1..].iter().map(|m| format!("m_{m}"))),
            CalendarFeature::Monthday => names.push(MONTHDAY.to_string()),
        }
    }
    names
}

// One-hot encodings drop Monday and January as reference levels.
fn push_calendar(row: &mut Vec<f64>, date: Day, set: &BTreeSet<CalendarFeature>) {
    for f in set {
        match f {
            CalendarFeature::Weekday => {
                let wd = date.weekday();
                row.extend((1..7).map(|k| f64::from(u8::from(wd == k))));
            }
            CalendarFeature::Month => {
                let m = date.month() as usize - 1;
                row.extend((1..12).map(|k| f64::from(u8::from(m == k))));
            }
            CalendarFeature::Monthday => row.push(f64::from(date.day_of_month())),
        }
    }
}

pub fn ts_column_names(spec: &FeatureSpec) -> Vec<String> {
    let mut names: Vec<String> = spec.lags.iter().map(|&k| lag_column_name(k)).collect();
    names.extend(calendar_names(&spec.calendar));
    if spec.include_promo {
        names.push(PROMO.to_string());
    }
    names
}

/// Feature row for the observation following `history` (oldest first).
pub fn ts_row(history: &[f64], date: Day, promo: bool, spec: &FeatureSpec) -> Result<Vec<f64>> {
    let mut row = Vec::new();
    for &k in &spec.lags {
        if k == 0 || k > history.len() {
            return Err(Error::LagExceedsLength { lag: k, len: history.len() });
        }
        row.push(history[history.len() - k]);
    }
    push_calendar(&mut row, date, &spec.calendar);
    if spec.include_promo {
        row.push(f64::from(u8::from(promo)));
    }
    Ok(row)
}

/// Time-series framing: row `t` holds lagged log-sales, optional calendar
/// encodings and promo; the first `max(lags)` observations are consumed.
pub fn build_ts_features(series: &SeriesView, promo: &[bool], spec: &FeatureSpec) -> Result<FeatureMatrix> {
    if spec.framing != Framing::Ts || spec.lags.is_empty() {
        return Err(Error::InvalidArgument("time-series framing needs a TS spec with lags".into()));
    }
    if promo.len() != series.len() {
        return Err(Error::LengthMismatch(promo.len(), series.len()));
    }
    let max_lag = spec.max_lag();
    if max_lag >= series.len() {
        return Err(Error::LagExceedsLength { lag: max_lag, len: series.len() });
    }
    let names = ts_column_names(spec);
    let n = series.len() - max_lag;
    let mut values = Vec::with_capacity(n * names.len());
    for t in max_lag..series.len() {
        values.extend(ts_row(&series.log_sales[..t], series.dates[t], promo[t], spec)?);
    }
    FeatureMatrix::new(
        names,
        values,
        series.log_sales[max_lag..].to_vec(),
        series.dates[max_lag..].to_vec(),
        vec![series.store_id; n],
    )
}

/// Mean log-sales over a store's open, positive-sales days up to `cutoff`.
pub fn store_mean_log_sales(panel: &SalesPanel, store: u32, cutoff: Day) -> Result<f64> {
    let rows = panel.store(store)?;
    let logs: Vec<f64> =
        rows.iter().filter(|r| r.open && r.sales > 0.0 && r.date <= cutoff).map(|r| r.sales.ln()).collect();
    if logs.is_empty() {
        return Err(Error::EmptySelection(vec![store]));
    }
    Ok(logs.iter().sum::<f64>() / logs.len() as f64)
}

pub fn iid_column_names(spec: &FeatureSpec) -> Vec<String> {
    let mut names = calendar_names(&spec.calendar);
    if spec.include_promo {
        names.push(PROMO.to_string());
    }
    names.push(MEAN_LOG_SALES.to_string());
    names
}

/// Exchangeable framing: one row per (store, open day) with calendar
/// encodings, promo and the store's training-window mean log-sales.
pub fn build_iid_features(
    panel: &SalesPanel,
    stores: &BTreeSet<u32>,
    spec: &FeatureSpec,
    train_cutoff: Day,
) -> Result<FeatureMatrix> {
    if spec.framing != Framing::Iid {
        return Err(Error::InvalidArgument("i.i.d. framing needs an IID spec".into()));
    }
    if stores.is_empty() {
        return Err(Error::EmptySelection(vec![]));
    }
    let mut means = Vec::with_capacity(stores.len());
    let mut empty = Vec::new();
    for &s in stores {
        match store_mean_log_sales(panel, s, train_cutoff) {
            Ok(m) => means.push(m),
            Err(Error::EmptySelection(_)) => empty.push(s),
            Err(e) => return Err(e),
        }
    }
    if !empty.is_empty() {
        return Err(Error::EmptySelection(empty));
    }
    let names = iid_column_names(spec);
    let (mut values, mut y, mut dates, mut row_stores) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (&s, &mean) in stores.iter().zip(&means) {
        for r in panel.store(s)?.iter().filter(|r| r.open && r.sales > 0.0) {
            push_calendar(&mut values, r.date, &spec.calendar);
            if spec.include_promo {
                values.push(f64::from(u8::from(r.promo)));
            }
            values.push(mean);
            y.push(r.sales.ln());
            dates.push(r.date);
            row_stores.push(s);
        }
    }
    FeatureMatrix::new(names, values, y, dates, row_stores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize_panel, GeneratorParams, SalesRecord};
    use std::f64::consts::E;

    fn series(values: &[f64], start: Day) -> SeriesView {
        SeriesView {
            store_id: 1,
            dates: (0..values.len()).map(|i| start.plus_days(i as i32)).collect(),
            log_sales: values.to_vec(),
        }
    }

    fn lag_only(lags: &[usize]) -> FeatureSpec {
        FeatureSpec {
            framing: Framing::Ts,
            lags: lags.iter().copied().collect(),
            include_promo: false,
            calendar: BTreeSet::new(),
        }
    }

    #[test]
    fn single_lag_shifts_series() {
        let s = series(&[1.0, 2.0, 3.0, 4.0], Day(0));
        let fm = build_ts_features(&s, &[false; 4], &lag_only(&[1])).unwrap();
        assert_eq!(fm.column_names, vec!["prevLogSales"]);
        assert_eq!(fm.column(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(fm.y, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn long_lag_rejected() {
        let s = series(&[1.0; 5], Day(0));
        assert_eq!(
            build_ts_features(&s, &[false; 5], &lag_only(&[1, 7])),
            Err(Error::LagExceedsLength { lag: 7, len: 5 })
        );
    }

    #[test]
    fn weekday_one_hot_has_single_active_level() {
        // 2015-07-06 is a Monday (reference level)
        let monday = Day::from_ymd(2015, 7, 6).unwrap();
        let s = series(&[1.0, 2.0, 3.0, 4.0], monday);
        let spec = FeatureSpec { calendar: [CalendarFeature::Weekday].into_iter().collect(), ..lag_only(&[1]) };
        let fm = build_ts_features(&s, &[false; 4], &spec).unwrap();
        for i in 0..fm.n_rows() {
            let hot: f64 = fm.row(i)[1..].iter().sum();
            assert_eq!(hot, 1.0); // Tue, Wed, Thu
        }
        assert_eq!(fm.n_rows(), 3);
    }

    fn store_rows(store: u32, sales: &[f64], start: Day) -> Vec<SalesRecord> {
        sales
            .iter()
            .enumerate()
            .map(|(i, &s)| SalesRecord {
                store_id: store,
                date: start.plus_days(i as i32),
                sales: s,
                customers: 1,
                promo: i % 2 == 0,
                open: true,
            })
            .collect()
    }

    #[test]
    fn store_mean_examples() {
        let start = Day::from_ymd(2015, 1, 1).unwrap();
        let panel = SalesPanel::new(store_rows(1, &[E, E.powi(3)], start)).unwrap();
        assert!((store_mean_log_sales(&panel, 1, start.plus_days(5)).unwrap() - 2.0).abs() < 1e-12);
        assert!((store_mean_log_sales(&panel, 1, start).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(store_mean_log_sales(&panel, 1, start.plus_days(-1)), Err(Error::EmptySelection(vec![1])));
    }

    #[test]
    fn store_mean_reassociation() {
        let panel = synthesize_panel(5, 1, 300, &GeneratorParams::default()).unwrap();
        let cutoff = panel.date_range().unwrap().1;
        let reversed: Vec<f64> = panel.store(1).unwrap().iter().rev().map(|r| r.sales.ln()).collect();
        let oracle = reversed.iter().fold(0.0, |a, b| a + b) / reversed.len() as f64;
        assert!((store_mean_log_sales(&panel, 1, cutoff).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn iid_rows_carry_train_window_store_means() {
        let start = Day::from_ymd(2015, 1, 1).unwrap();
        let mut recs = store_rows(1, &[E, E, E, 1e9], start);
        recs.extend(store_rows(2, &[E * E, E * E, E * E, 1e9], start));
        let panel = SalesPanel::new(recs).unwrap();
        let cutoff = start.plus_days(2);
        let stores: BTreeSet<u32> = [1, 2].into_iter().collect();
        let fm = build_iid_features(&panel, &stores, &FeatureSpec::iid_default(), cutoff).unwrap();
        let j = fm.column_index(MEAN_LOG_SALES).unwrap();
        for i in 0..fm.n_rows() {
            let expected = if fm.row_stores[i] == 1 { 1.0 } else { 2.0 };
            assert!((fm.get(i, j) - expected).abs() < 1e-12);
        }
        assert_eq!(fm.n_cols(), 6 + 11 + 1 + 1 + 1);

        let late = SalesPanel::new(store_rows(3, &[5.0], start.plus_days(10))).unwrap();
        let only3: BTreeSet<u32> = [3].into_iter().collect();
        assert_eq!(
            build_iid_features(&late, &only3, &FeatureSpec::iid_default(), cutoff),
            Err(Error::EmptySelection(vec![3]))
        );
    }

    #[test]
    fn feature_csv_has_target_column() {
        let s = series(&[1.0, 2.0, 3.0], Day(0));
        let fm = build_ts_features(&s, &[false; 3], &lag_only(&[1])).unwrap();
        let mut buf = Vec::new();
        fm.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("prevLogSales,target\n1,2\n"));
    }
}
