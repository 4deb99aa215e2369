//! Store-sales panels: loading, validation, log transform, train/validation
//! splitting and a seeded synthetic generator.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::date::Day;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SalesRecord {
    pub store_id: u32,
    pub date: Day,
    pub sales: f64,
    pub customers: u32,
    pub promo: bool,
    pub open: bool,
}

/// Multi-store daily sales, sorted by `(store_id, date)` with unique keys.
#[derive(Clone, Debug, PartialEq)]
pub struct SalesPanel {
    records: Vec<SalesRecord>,
    index: BTreeMap<u32, Range<usize>>,
}

impl SalesPanel {
    pub fn new(mut records: Vec<SalesRecord>) -> Result<Self> {
        for r in &records {
            if !(r.sales.is_finite() && r.sales >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "store {} on {}: sales must be finite and non-negative",
                    r.store_id, r.date
                )));
            }
        }
        records.sort_by_key(|r| (r.store_id, r.date));
        for w in records.windows(2) {
            if w[0].store_id == w[1].store_id && w[0].date == w[1].date {
                return Err(Error::DuplicateKey { store: w[0].store_id, date: w[0].date.to_string() });
            }
        }
        let mut index = BTreeMap::new();
        let mut start = 0;
        for i in 1..=records.len() {
            if i == records.len() || records[i].store_id != records[start].store_id {
                index.insert(records[start].store_id, start..i);
                start = i;
            }
        }
        Ok(Self { records, index })
    }

    pub fn records(&self) -> &[SalesRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn store_ids(&self) -> Vec<u32> {
        self.index.keys().copied().collect()
    }

    /// Records of one store in ascending date order.
    pub fn store(&self, store: u32) -> Result<&[SalesRecord]> {
        self.index.get(&store).map(|r| &self.records[r.clone()]).ok_or(Error::UnknownStore(store))
    }

    pub fn record(&self, store: u32, date: Day) -> Option<&SalesRecord> {
        let rows = self.store(store).ok()?;
        rows.binary_search_by_key(&date, |r| r.date).ok().map(|i| &rows[i])
    }

    /// Promo flags for the dates of a series; dates absent from the panel map to `false`.
    pub fn promo_flags(&self, series: &SeriesView) -> Vec<bool> {
        series.dates.iter().map(|&d| self.record(series.store_id, d).map(|r| r.promo).unwrap_or(false)).collect()
    }

    /// Earliest and latest dates across all stores.
    pub fn date_range(&self) -> Option<(Day, Day)> {
        let lo = self.records.iter().map(|r| r.date).min()?;
        let hi = self.records.iter().map(|r| r.date).max()?;
        Some((lo, hi))
    }

    /// Canonical CSV: `Store,Date,Sales,Customers,Open,Promo` with ISO dates.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["Store", "Date", "Sales", "Customers", "Open", "Promo"])?;
        for r in &self.records {
            w.write_record([
                r.store_id.to_string(),
                r.date.to_string(),
                r.sales.to_string(),
                r.customers.to_string(),
                u8::from(r.open).to_string(),
                u8::from(r.promo).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DateFormat {
    #[default]
    Iso,
    Dmy,
}

/// Maps logical fields to CSV column names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub store: String,
    pub date: String,
    pub sales: String,
    pub customers: String,
    pub open: String,
    pub promo: String,
    pub date_format: DateFormat,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            store: "Store".into(),
            date: "Date".into(),
            sales: "Sales".into(),
            customers: "Customers".into(),
            open: "Open".into(),
            promo: "Promo".into(),
            date_format: DateFormat::Iso,
        }
    }
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

fn parse_count(s: &str) -> Option<u32> {
    let s = s.trim();
    s.parse::<u32>().ok().or_else(|| {
        let v: f64 = s.parse().ok()?;
        (v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as u32)
    })
}

/// Parse a header-bearing CSV into a panel. Line numbers in errors are
/// 1-based file lines (the header is line 1).
pub fn load_sales_csv<R: Read>(source: R, schema: &CsvSchema) -> Result<SalesPanel> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (c_store, c_date, c_sales) = (col(&schema.store)?, col(&schema.date)?, col(&schema.sales)?);
    let (c_cust, c_open, c_promo) = (col(&schema.customers)?, col(&schema.open)?, col(&schema.promo)?);

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |field: &str| Error::MalformedRow { line, reason: format!("unparseable {field}") };
        let cell = |i: usize| row.get(i).unwrap_or("");
        let store_id: u32 = cell(c_store).trim().parse().map_err(|_| bad("store"))?;
        if store_id == 0 {
            return Err(bad("store"));
        }
        let date = match schema.date_format {
            DateFormat::Iso => Day::parse_iso(cell(c_date)),
            DateFormat::Dmy => Day::parse_dmy(cell(c_date)),
        }
        .ok_or_else(|| bad("date"))?;
        let sales: f64 = cell(c_sales).trim().parse().map_err(|_| bad("sales"))?;
        if !(sales.is_finite() && sales >= 0.0) {
            return Err(bad("sales"));
        }
        let customers = parse_count(cell(c_cust)).ok_or_else(|| bad("customers"))?;
        let open = parse_flag(cell(c_open)).ok_or_else(|| bad("open"))?;
        let promo = parse_flag(cell(c_promo)).ok_or_else(|| bad("promo"))?;
        records.push(SalesRecord { store_id, date, sales, customers, promo, open });
    }
    SalesPanel::new(records)
}

/// One store's open-day sales on the natural-log scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesView {
    pub store_id: u32,
    pub dates: Vec<Day>,
    pub log_sales: Vec<f64>,
}

impl SeriesView {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn last_date(&self) -> Option<Day> {
        self.dates.last().copied()
    }

    fn subset(&self, range: Range<usize>) -> SeriesView {
        SeriesView {
            store_id: self.store_id,
            dates: self.dates[range.clone()].to_vec(),
            log_sales: self.log_sales[range].to_vec(),
        }
    }
}

/// Log-sales series for a store. Closed days and zero-sales days are dropped.
pub fn log_series(panel: &SalesPanel, store: u32) -> Result<SeriesView> {
    let rows = panel.store(store)?;
    let (dates, log_sales): (Vec<Day>, Vec<f64>) =
        rows.iter().filter(|r| r.open && r.sales > 0.0).map(|r| (r.date, r.sales.ln())).unzip();
    if dates.is_empty() {
        return Err(Error::EmptySeries(store));
    }
    Ok(SeriesView { store_id: store, dates, log_sales })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub validation_months: u32,
    /// Explicit last training date; derived from `validation_months` when absent.
    pub cutoff_date: Option<Day>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { validation_months: 2, cutoff_date: None }
    }
}

impl SplitSpec {
    pub fn months(validation_months: u32) -> Self {
        Self { validation_months, cutoff_date: None }
    }

    /// Last date belonging to the training side for a series ending at `last`.
    pub fn cutoff(&self, last: Day) -> Day {
        self.cutoff_date.unwrap_or_else(|| last.minus_months(self.validation_months))
    }
}

/// Validation gets every date strictly after the cutoff, training the rest.
pub fn train_validation_split(series: &SeriesView, spec: &SplitSpec) -> Result<(SeriesView, SeriesView)> {
    if spec.validation_months == 0 && spec.cutoff_date.is_none() {
        return Err(Error::InvalidArgument("validation_months must be positive".into()));
    }
    let last = series.last_date().ok_or(Error::EmptyInput)?;
    let cutoff = spec.cutoff(last);
    let k = series.dates.partition_point(|&d| d <= cutoff);
    if k == 0 || k == series.len() {
        return Err(Error::SpanTooShort { months: spec.validation_months });
    }
    Ok((series.subset(0..k), series.subset(k..series.len())))
}

/// Parameters of the synthetic sales generator (all effects in log space).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub start: Day,
    pub store_level_mean: f64,
    pub store_level_sd: f64,
    /// Monday..Sunday additive effects.
    pub weekday_effect: [f64; 7],
    pub ar_coef: f64,
    pub noise_sd: f64,
    pub promo_uplift: f64,
    pub promo_rate: f64,
    pub ticket_mean: f64,
    pub customer_noise_sd: f64,
    /// Weekdays (0 = Monday) on which stores are closed with zero sales.
    pub closed_weekdays: Vec<usize>,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            start: Day::from_ymd(2014, 1, 1).expect("valid date"),
            store_level_mean: 8.5,
            store_level_sd: 0.3,
            weekday_effect: [0.12, 0.02, -0.02, -0.03, 0.04, 0.08, -0.21],
            ar_coef: 0.5,
            noise_sd: 0.1,
            promo_uplift: 0.3,
            promo_rate: 0.4,
            ticket_mean: 9.0,
            customer_noise_sd: 0.05,
            closed_weekdays: Vec::new(),
        }
    }
}

impl GeneratorParams {
    /// Strong weekday and promo effects over weak autoregressive noise.
    pub fn calendar_dominated() -> Self {
        Self {
            weekday_effect: [0.35, 0.1, -0.05, -0.1, 0.05, 0.25, -0.6],
            ar_coef: 0.3,
            noise_sd: 0.05,
            promo_uplift: 0.4,
            ..Self::default()
        }
    }
}

/// Seeded synthetic panel: per store, log-sales = level + weekday effect +
/// promo uplift + AR(1) noise.
pub fn synthesize_panel(seed: u64, n_stores: usize, n_days: usize, gen: &GeneratorParams) -> Result<SalesPanel> {
    if n_stores == 0 {
        return Err(Error::InvalidArgument("n_stores must be at least 1".into()));
    }
    if n_days < 14 {
        return Err(Error::InvalidArgument("n_days must be at least 14".into()));
    }
    if !(0.0..=1.0).contains(&gen.promo_rate) || gen.ar_coef.abs() >= 1.0 {
        return Err(Error::InvalidArgument("promo_rate in [0,1] and |ar_coef| < 1 required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_stores * n_days);
    for s in 0..n_stores {
        let store_id = s as u32 + 1;
        let z: f64 = rng.sample(StandardNormal);
        let level = gen.store_level_mean + gen.store_level_sd * z;
        let ticket = gen.ticket_mean * (1.0 + 0.2 * (rng.random::<f64>() - 0.5));
        let stationary_sd = gen.noise_sd / (1.0 - gen.ar_coef * gen.ar_coef).sqrt();
        let z0: f64 = rng.sample(StandardNormal);
        let mut noise = stationary_sd * z0;
        for t in 0..n_days {
            let date = gen.start.plus_days(t as i32);
            let promo = rng.random::<f64>() < gen.promo_rate;
            if t > 0 {
                let z: f64 = rng.sample(StandardNormal);
                noise = gen.ar_coef * noise + gen.noise_sd * z;
            }
            let cz: f64 = rng.sample(StandardNormal);
            let open = !gen.closed_weekdays.contains(&date.weekday());
            let log_sales =
                level + gen.weekday_effect[date.weekday()] + gen.promo_uplift * f64::from(u8::from(promo)) + noise;
            let (sales, customers) = if open {
                let sales = log_sales.exp();
                let customers = (sales / ticket * (gen.customer_noise_sd * cz).exp()).round() as u32;
                (sales, customers)
            } else {
                (0.0, 0)
            };
            records.push(SalesRecord { store_id, date, sales, customers, promo, open });
        }
    }
    SalesPanel::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn rec(store: u32, date: &str, sales: f64, open: bool) -> SalesRecord {
        SalesRecord { store_id: store, date: date.parse().unwrap(), sales, customers: 10, promo: false, open }
    }

    #[test]
    fn loads_well_formed_csv_sorted_per_store() {
        let csv = "Store,Date,Sales,Customers,Open,Promo\n\
                   1,2015-07-02,100,10,1,0\n\
                   1,2015-07-01,200,20,1,1\n\
                   2,2015-07-01,50,5,1,0\n";
        let panel = load_sales_csv(csv.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(panel.len(), 3);
        let s1 = panel.store(1).unwrap();
        assert!(s1[0].date < s1[1].date);
        assert!(s1[0].promo);
    }

    #[test]
    fn duplicate_key_rejected() {
        let csv = "Store,Date,Sales,Customers,Open,Promo\n\
                   1,2015-07-01,100,10,1,0\n\
                   1,2015-07-01,200,20,1,1\n";
        let err = load_sales_csv(csv.as_bytes(), &CsvSchema::default()).unwrap_err();
        assert_eq!(err, Error::DuplicateKey { store: 1, date: "2015-07-01".into() });
    }

    #[test]
    fn malformed_sales_reports_line() {
        let csv = "Store,Date,Sales,Customers,Open,Promo\n1,2015-07-01,abc,10,1,0\n";
        match load_sales_csv(csv.as_bytes(), &CsvSchema::default()) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_remapped_schema() {
        let csv = "shop,day,revenue,visitors,is_open,promo_flag\n3,01/07/2015,10,1,1,0\n";
        let err = load_sales_csv(csv.as_bytes(), &CsvSchema::default()).unwrap_err();
        assert_eq!(err, Error::MissingColumn("Store".into()));
        let schema = CsvSchema {
            store: "shop".into(),
            date: "day".into(),
            sales: "revenue".into(),
            customers: "visitors".into(),
            open: "is_open".into(),
            promo: "promo_flag".into(),
            date_format: DateFormat::Dmy,
        };
        let panel = load_sales_csv(csv.as_bytes(), &schema).unwrap();
        assert_eq!(panel.records()[0].date.to_string(), "2015-07-01");
    }

    #[test]
    fn canonical_csv_round_trips() {
        let panel = synthesize_panel(3, 2, 20, &GeneratorParams::default()).unwrap();
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let back = load_sales_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
        assert_eq!(back, panel);
    }

    #[test]
    fn log_series_drops_zero_and_closed_days() {
        let panel = SalesPanel::new(vec![rec(1, "2015-01-01", E, true), rec(1, "2015-01-02", E * E, true)]).unwrap();
        let s = log_series(&panel, 1).unwrap();
        assert!((s.log_sales[0] - 1.0).abs() < 1e-15 && (s.log_sales[1] - 2.0).abs() < 1e-15);

        let panel = SalesPanel::new(vec![rec(1, "2015-01-01", 0.0, true), rec(1, "2015-01-02", E, true)]).unwrap();
        let s = log_series(&panel, 1).unwrap();
        assert_eq!(s.log_sales.len(), 1);
        assert!((s.log_sales[0] - 1.0).abs() < 1e-15);

        let panel = SalesPanel::new(vec![rec(1, "2015-01-01", 5.0, false)]).unwrap();
        assert_eq!(log_series(&panel, 1), Err(Error::EmptySeries(1)));
        assert_eq!(log_series(&panel, 9), Err(Error::UnknownStore(9)));
    }

    fn daily(end: Day, n: usize) -> SeriesView {
        let dates: Vec<Day> = (0..n).map(|i| end.plus_days(i as i32 - n as i32 + 1)).collect();
        SeriesView { store_id: 1, log_sales: vec![1.0; n], dates }
    }

    #[test]
    fn two_month_split_uses_calendar_months() {
        let end = Day::from_ymd(2015, 7, 31).unwrap();
        let s = daily(end, 365);
        let (train, valid) = train_validation_split(&s, &SplitSpec::default()).unwrap();
        assert_eq!(valid.dates[0].to_string(), "2015-06-01");
        assert_eq!(valid.last_date(), Some(end));
        assert_eq!(train.last_date().unwrap().to_string(), "2015-05-31");
        let mut joined = train.dates.clone();
        joined.extend(valid.dates);
        assert_eq!(joined, s.dates);

        let short = daily(end, 30);
        assert_eq!(train_validation_split(&short, &SplitSpec::default()), Err(Error::SpanTooShort { months: 2 }));
    }

    #[test]
    fn synthetic_panel_is_deterministic() {
        let g = GeneratorParams::default();
        assert_eq!(synthesize_panel(42, 3, 50, &g).unwrap(), synthesize_panel(42, 3, 50, &g).unwrap());
        assert_ne!(synthesize_panel(42, 3, 50, &g).unwrap(), synthesize_panel(43, 3, 50, &g).unwrap());
    }

    #[test]
    fn degenerate_generator_gives_constant_sales() {
        let g = GeneratorParams {
            weekday_effect: [0.0; 7],
            noise_sd: 0.0,
            promo_uplift: 0.0,
            ..GeneratorParams::default()
        };
        let panel = synthesize_panel(7, 2, 30, &g).unwrap();
        for s in panel.store_ids() {
            let rows = panel.store(s).unwrap();
            assert!(rows.iter().all(|r| r.sales == rows[0].sales));
        }
    }

    #[test]
    fn promo_frequency_matches_rate() {
        let g = GeneratorParams { promo_rate: 0.4, ..GeneratorParams::default() };
        let panel = synthesize_panel(42, 1, 10_000, &g).unwrap();
        let freq = panel.records().iter().filter(|r| r.promo).count() as f64 / 10_000.0;
        assert!((freq - 0.4).abs() < 0.02, "promo frequency {freq}");
    }

    #[test]
    fn closed_weekdays_produce_zero_sales() {
        let g = GeneratorParams { closed_weekdays: vec![6], ..GeneratorParams::default() };
        let panel = synthesize_panel(1, 1, 28, &g).unwrap();
        let closed = panel.records().iter().filter(|r| !r.open).count();
        assert_eq!(closed, 4);
        assert_eq!(log_series(&panel, 1).unwrap().len(), 24);
    }
}
