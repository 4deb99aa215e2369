//! Sample a t copula, refit it from pseudo-observations and check the density
//! integrates to one.
use salescast::copula::{copula_pdf, fit_t_copula, kendall_tau, pseudo_observations, sample_copula, CopulaParams};

fn main() -> salescast::error::Result<()> {
    let truth = CopulaParams::student_t(0.5, 5.0);
    let draws = sample_copula(&truth, 5000, 42)?;
    let pobs = pseudo_observations(draws.columns())?;
    println!("Kendall tau {:.4}", kendall_tau(pobs.column(0), pobs.column(1))?);

    let fit = fit_t_copula(&pobs)?;
    println!("fitted {:?}, log-likelihood {:.2}", fit.params, fit.log_likelihood);

    let g = 400;
    let mut mass = 0.0;
    for i in 0..g {
        for j in 0..g {
            let (u, v) = ((i as f64 + 0.5) / g as f64, (j as f64 + 0.5) / g as f64);
            mass += copula_pdf(&fit.params, u, v)?;
        }
    }
    println!("density mass on a {g}x{g} grid: {:.4}", mass / (g * g) as f64);
    Ok(())
}
