//! Value at risk from a fitted gamma-marginal copula model of sales and
//! customers.
use salescast::copula::{value_at_risk, value_at_risk_tail, CopulaFamily, JointModel, Tail};
use salescast::data::{synthesize_panel, GeneratorParams};

fn main() -> salescast::error::Result<()> {
    let panel = synthesize_panel(5, 2, 500, &GeneratorParams::default())?;
    let open: Vec<_> = panel.records().iter().filter(|r| r.open && r.sales > 0.0).collect();
    let log_sales: Vec<f64> = open.iter().map(|r| r.sales.ln()).collect();
    let log_customers: Vec<f64> = open.iter().map(|r| f64::from(r.customers).ln()).collect();

    let names = vec!["logSales".to_string(), "logCustomers".to_string()];
    let (model, fit) = JointModel::fit(&[log_sales, log_customers], &names, CopulaFamily::StudentT)?;
    println!("copula {:?}, log-likelihood {:.2}", model.copula, fit.log_likelihood);

    let draws = model.sample(100_000, 9)?;
    for (name, col) in names.iter().zip(&draws) {
        let upper = value_at_risk(col, 0.95)?;
        let lower = value_at_risk_tail(col, 0.95, Tail::Lower)?;
        println!("{name}: 95% upper {upper:.4}, 95% shortfall level {lower:.4}");
    }
    Ok(())
}
