//! Select an ARIMA order by AIC and forecast the validation window.
use salescast::data::{log_series, synthesize_panel, train_validation_split, GeneratorParams, SplitSpec};
use salescast::evaluation::rmse;
use salescast::forecast::fit_arima;

fn main() -> salescast::error::Result<()> {
    let panel = synthesize_panel(7, 1, 500, &GeneratorParams::default())?;
    let series = log_series(&panel, 1)?;
    let (train, valid) = train_validation_split(&series, &SplitSpec::months(2))?;

    let model = fit_arima(&train, 3, 1, 2)?;
    let o = model.order;
    println!("order ({}, {}, {}), AIC {:.2}", o.p, o.d, o.q, model.aic);
    println!("phi {:?}", model.phi);
    println!("theta {:?}", model.theta);

    let forecast = model.forecast(valid.len());
    println!("validation RMSE {:.4}", rmse(&valid.log_sales, &forecast)?);
    Ok(())
}
