//! Compare time-series and exchangeable framings across stores, then write
//! the backtest as CSV and an SVG bar chart.
use std::collections::BTreeSet;

use salescast::data::{synthesize_panel, GeneratorParams, SplitSpec};
use salescast::evaluation::{backtest_stores, BacktestConfig, Method};
use salescast::report::{backtest_csv, emit_svg, PlotData, PlotSpec};

fn main() -> salescast::error::Result<()> {
    let panel = synthesize_panel(42, 4, 600, &GeneratorParams::calendar_dominated())?;
    let methods: BTreeSet<Method> = [Method::GbtTs, Method::GbtIid].into();
    let results =
        backtest_stores(&panel, &panel.store_ids(), &methods, &SplitSpec::default(), 42, &BacktestConfig::default());

    let reports: Vec<_> = results.into_iter().filter_map(|(_, r)| r.ok()).collect();
    print!("{}", backtest_csv(&reports)?);

    let bars = reports
        .iter()
        .flat_map(|r| r.methods.iter().map(move |(k, m)| (format!("{} {k}", r.store_id), m.rmse.unwrap_or(0.0))))
        .collect();
    let svg = emit_svg(&PlotSpec::new("Validation RMSE", "store and method", "RMSE", PlotData::Bars(bars)))?;
    let path = std::env::temp_dir().join("salescast_backtest.svg");
    std::fs::write(&path, svg)?;
    println!("figure written to {}", path.display());
    Ok(())
}
