//! Exchangeable (i.i.d.) features with a cross-validated LASSO and a
//! gradient-boosted tree ensemble.
use std::collections::BTreeSet;

use salescast::data::{log_series, synthesize_panel, GeneratorParams, SplitSpec};
use salescast::evaluation::rmse;
use salescast::features::{build_iid_features, FeatureSpec};
use salescast::forecast::{cv_lambda, fit_gbt, fit_lasso, GbtParams};

fn main() -> salescast::error::Result<()> {
    let panel = synthesize_panel(3, 2, 500, &GeneratorParams::calendar_dominated())?;
    let last = log_series(&panel, 1)?.last_date().expect("non-empty");
    let cutoff = SplitSpec::months(2).cutoff(last);

    let stores: BTreeSet<u32> = [1].into();
    let fm = build_iid_features(&panel, &stores, &FeatureSpec::iid_default(), cutoff)?;
    let (train_rows, valid_rows) = fm.split_at(cutoff);
    let (train, valid) = (fm.select_rows(&train_rows), fm.select_rows(&valid_rows));
    println!("{} columns: {:?}", fm.n_cols(), fm.column_names);

    let (lambda, path) = cv_lambda(&train, 5, 20)?;
    println!("CV lambda {lambda:.5} (grid of {})", path.len());
    let lasso = fit_lasso(&train, lambda)?;
    let nonzero = lasso.beta.iter().filter(|b| **b != 0.0).count();
    println!("LASSO: {nonzero} non-zero coefficients, RMSE {:.4}", rmse(&valid.y, &lasso.predict(&valid)?)?);

    let gbt = fit_gbt(&train, &GbtParams::default())?;
    println!("GBT: {} trees, RMSE {:.4}", gbt.trees.len(), rmse(&valid.y, &gbt.predict(&valid)?)?);
    Ok(())
}
