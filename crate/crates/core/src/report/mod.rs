//! Report emission: sorted-key JSON, flattened CSV and SVG figures.

pub mod svg;

pub use svg::{emit_svg, kernel_density, PlotData, PlotSpec, Series, TickFormat};

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::evaluation::BacktestReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Pretty JSON with object keys in sorted order and a trailing newline.
pub fn emit_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's default map is ordered, so routing through Value sorts keys
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub const FLAT_CSV_HEADER: &str = "# one row per leaf value; nested keys joined with '.', array positions as indices\n";

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten(&key(k), child, out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), child, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Flatten any serializable value into `key,value` rows.
pub fn emit_flat_csv<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut rows = Vec::new();
    flatten("", &v, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"])?;
    for (k, val) in rows {
        w.write_record([k, val])?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| crate::error::Error::Io(e.to_string()))?)
        .expect("csv output is utf-8");
    Ok(format!("{FLAT_CSV_HEADER}{body}"))
}

pub const BACKTEST_CSV_HEADER: &str =
    "# one row per store and method; rmse is in log-sales units and empty when the method failed (see report.json)\n";

/// `store,method,framing,rmse` rows sorted by store, then method name.
pub fn backtest_csv(reports: &[BacktestReport]) -> Result<String> {
    let mut sorted: Vec<&BacktestReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.store_id);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["store", "method", "framing", "rmse"])?;
    for r in sorted {
        for (method, res) in &r.methods {
            w.write_record([
                r.store_id.to_string(),
                method.clone(),
                res.framing.clone(),
                res.rmse.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| crate::error::Error::Io(e.to_string()))?)
        .expect("csv output is utf-8");
    Ok(format!("{BACKTEST_CSV_HEADER}{body}"))
}

/// Generic entry point: JSON as-is, CSV flattened.
pub fn emit_report<T: Serialize>(value: &T, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => emit_json(value),
        ReportFormat::Csv => emit_flat_csv(value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{CopulaFit, CopulaParams};
    use std::collections::BTreeMap;

    #[test]
    fn json_keys_sorted_and_round_trip() {
        let fit =
            CopulaFit { params: CopulaParams::student_t(0.5, 6.0), log_likelihood: 120.5, start_log_likelihood: 110.0 };
        let mut doc = BTreeMap::new();
        doc.insert("zeta", serde_json::to_value(fit).unwrap());
        doc.insert("alpha", serde_json::json!({"n": 5000, "b": 1, "a": 2}));
        let s = emit_json(&doc).unwrap();
        assert!(s.find("\"alpha\"").unwrap() < s.find("\"zeta\"").unwrap());
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        let back: BTreeMap<&str, Value> = serde_json::from_str(&s).unwrap();
        assert_eq!(serde_json::from_value::<CopulaFit>(back["zeta"].clone()).unwrap(), fit);
        assert!(s.contains("\"family\": \"t\""));
    }

    #[test]
    fn flat_csv_rows() {
        let v = serde_json::json!({"b": [1, 2], "a": {"x": "s", "y": null}});
        let csv = emit_flat_csv(&v).unwrap();
        assert!(csv.starts_with('#'));
        let lines: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(lines, vec!["key,value", "a.x,s", "a.y,", "b.0,1", "b.1,2"]);
    }
}
