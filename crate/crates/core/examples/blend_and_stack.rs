//! Linear blending of ARIMA and GBT forecasts, and residual stacking of a
//! LASSO with a GBT.
use std::collections::BTreeSet;

use salescast::data::{synthesize_panel, GeneratorParams, SplitSpec};
use salescast::evaluation::{backtest, BacktestConfig, Method};

fn main() -> salescast::error::Result<()> {
    let panel = synthesize_panel(42, 1, 600, &GeneratorParams::default())?;
    let methods: BTreeSet<Method> = [Method::Arima, Method::GbtIid, Method::Blend, Method::Lasso, Method::Stack].into();
    let report = backtest(&panel, 1, &methods, &SplitSpec::months(2), 42, &BacktestConfig::default())?;

    for (name, m) in &report.methods {
        println!("{name:8} {:6} rmse {:.4}", m.framing, m.rmse.unwrap_or(f64::NAN));
    }
    let d = &report.methods["blend"].details;
    println!("blend weights: w0 {:.3} arima {:.3} gbt {:.3}", d["w0"], d["wa"], d["wb"]);
    println!(
        "in-window RMSE: arima {:.4} gbt {:.4} blend {:.4}",
        d["window_rmse_arima"], d["window_rmse_gbt"], d["window_rmse_blend"]
    );
    Ok(())
}
