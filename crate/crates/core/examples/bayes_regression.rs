//! Gaussian and Student-t Gibbs samplers on data with gross outliers.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use salescast::bayes::{
    fit_student_t_regression, gibbs_gaussian_regression, posterior_summary, trace_diagnostics, McmcOptions,
    RegressionPrior,
};
use salescast::features::{FeatureMatrix, MEAN_LOG_SALES, PROMO};

fn main() -> salescast::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (n, truth) = (1000, [1.0, 0.9, 0.3]);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let level = 8.0 + rng.random::<f64>();
        let promo = f64::from(u8::from(rng.random::<f64>() < 0.4));
        let z: f64 = rng.sample(StandardNormal);
        let outlier = if i % 100 == 0 { 3.0 } else { 0.0 };
        y.push(truth[0] + truth[1] * level + truth[2] * promo + 0.1 * z + outlier);
        rows.push(vec![level, promo]);
    }
    let fm = FeatureMatrix::from_rows(vec![MEAN_LOG_SALES.into(), PROMO.into()], &rows, y)?;
    let prior = RegressionPrior::weak(3);
    let opts = McmcOptions { iters: 4000, burn_in: 1000, seed: 1 };

    for chain in [gibbs_gaussian_regression(&fm, &prior, &opts)?, fit_student_t_regression(&fm, &prior, &opts)?] {
        println!("{} model", chain.model);
        let summary = posterior_summary(&chain)?;
        let diag = trace_diagnostics(&chain)?;
        for name in &chain.param_names {
            let s = &summary[name];
            println!("  {name:14} mean {:9.4} sd {:.4} ess {:7.0}", s.mean, s.sd, diag[name].ess);
        }
        println!("  acceptance {:?} warnings {:?}", chain.acceptance, chain.warnings);
    }
    Ok(())
}
