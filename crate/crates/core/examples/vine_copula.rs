//! Fit a three-variable C-vine to data with one binary column and resample it.
use std::collections::BTreeSet;

use salescast::copula::{jittered_pseudo_observations, kendall_tau, sample_copula, CopulaParams};
use salescast::vine::{all_families, fit_cvine, sample_cvine};

fn main() -> salescast::error::Result<()> {
    let base = sample_copula(&CopulaParams::gaussian(0.7), 2000, 1)?;
    let other = sample_copula(&CopulaParams::student_t(0.4, 6.0), 2000, 2)?;
    let sales: Vec<f64> = base.column(0).to_vec();
    let customers: Vec<f64> = base.column(1).to_vec();
    let promo: Vec<f64> = other.column(0).iter().zip(&sales).map(|(a, s)| f64::from(u8::from(a + s > 1.0))).collect();

    let pobs = jittered_pseudo_observations(&[sales, customers, promo], &[2], 7)?;
    let names: Vec<String> = ["sales", "customers", "promo"].map(String::from).to_vec();
    let allowed: BTreeSet<_> = all_families();
    let mut spec = fit_cvine(&pobs, &allowed, &names)?;
    spec.jittered = vec!["promo".into()];
    for e in spec.trees.iter().flatten() {
        println!("tree {} {:30} {:?} tau {:.3}", e.tree + 1, e.label, e.copula, e.tau);
    }

    let sim = sample_cvine(&spec, 5000, 11)?;
    let r = spec.order[0];
    for j in (0..3).filter(|&j| j != r) {
        let t = kendall_tau(sim.column(r), sim.column(j))?;
        println!("resampled tau({}, {}) = {t:.3}", names[r], names[j]);
    }
    Ok(())
}
