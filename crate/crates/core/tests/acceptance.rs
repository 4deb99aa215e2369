//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use salescast::bayes::{
    effective_sample_size, fit_student_t_regression, gibbs_gaussian_regression, posterior_summary, McmcOptions,
    RegressionPrior,
};
use salescast::copula::{
    copula_pdf, fit_gamma_marginal, fit_t_copula, kendall_tau, pseudo_observations, rho_to_tau, sample_copula,
    value_at_risk, CopulaParams, GammaMarginal,
};
use salescast::data::{synthesize_panel, GeneratorParams, SeriesView, SplitSpec};
use salescast::date::Day;
use salescast::evaluation::{backtest, BacktestConfig, Method};
use salescast::features::{FeatureMatrix, MEAN_LOG_SALES, PROMO};
use salescast::forecast::lasso::lambda_max;
use salescast::forecast::{fit_arima, fit_arima_order, fit_gbt, fit_lasso, ArimaOrder, GbtParams};
use salescast::vine::{all_families, fit_cvine, sample_cvine, CVineSpec, PairCopula, VineEdge};

fn verdict(id: u32, what: &str, ok: bool, detail: String) {
    println!("{} criterion {id:>2}: {what} [{detail}]", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[test]
fn c01_blend_projection() {
    let start = Instant::now();
    let panel = synthesize_panel(42, 1, 730, &GeneratorParams::default()).unwrap();
    let methods: BTreeSet<Method> = [Method::Arima, Method::GbtIid, Method::Blend].into();
    let r = backtest(&panel, 1, &methods, &SplitSpec::default(), 42, &BacktestConfig::default()).unwrap();
    let d = &r.methods["blend"].details;
    let window_min = d["window_rmse_arima"].min(d["window_rmse_gbt"]);
    let in_window = d["window_rmse_blend"] <= window_min + 1e-10;
    let (a, g, b) =
        (r.rmse_of(Method::Arima).unwrap(), r.rmse_of(Method::GbtIid).unwrap(), r.rmse_of(Method::Blend).unwrap());
    let validation = b <= 1.05 * a.min(g);
    let elapsed = start.elapsed();
    verdict(
        1,
        "blend projection",
        in_window && validation && elapsed < Duration::from_secs(60),
        format!(
            "window blend {:.6} vs min {:.6}; validation blend {b:.4} arima {a:.4} gbt {g:.4}; {:.1}s",
            d["window_rmse_blend"],
            window_min,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c02_framing_comparison() {
    let panel = synthesize_panel(42, 1, 730, &GeneratorParams::calendar_dominated()).unwrap();
    let methods: BTreeSet<Method> = [Method::GbtTs, Method::GbtIid].into();
    let r = backtest(&panel, 1, &methods, &SplitSpec::default(), 42, &BacktestConfig::default()).unwrap();
    let (ts, iid) = (r.rmse_of(Method::GbtTs).unwrap(), r.rmse_of(Method::GbtIid).unwrap());
    verdict(2, "i.i.d. framing beats time-series framing", iid < ts, format!("iid {iid:.4} < ts {ts:.4}"));
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> FeatureMatrix {
    let beta: Vec<f64> = (0..p).map(|j| if j % 3 == 0 { 0.0 } else { normal(rng) }).collect();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..p).map(|j| 2.0 * normal(rng) + j as f64).collect();
        y.push(1.5 + x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + 0.5 * normal(rng));
        rows.push(x);
    }
    let names = (0..p).map(|j| format!("x{j}")).collect();
    FeatureMatrix::from_rows(names, &rows, y).unwrap()
}

#[test]
fn c03_lasso_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let fm = random_problem(&mut rng, 200, 6);
    let model = fit_lasso(&fm, 0.0).unwrap();
    let n = fm.n_rows();
    let x = DMatrix::from_fn(n, 7, |i, j| if j == 0 { 1.0 } else { fm.get(i, j - 1) });
    let y = DVector::from_vec(fm.y.clone());
    let ols = (x.transpose() * &x).lu().solve(&(x.transpose() * y)).unwrap();
    let mut ols_err = (ols[0] - model.intercept).abs();
    for j in 0..6 {
        ols_err = ols_err.max((ols[j + 1] - model.beta[j]).abs());
    }

    let mut worst_kkt: f64 = 0.0;
    for _ in 0..20 {
        let fm = random_problem(&mut rng, 150, 8);
        let lambda = rng.random_range(0.01..0.9) * lambda_max(&fm);
        let model = fit_lasso(&fm, lambda).unwrap();
        let nf = fm.n_rows() as f64;
        let ybar = fm.y.iter().sum::<f64>() / nf;
        let z: Vec<Vec<f64>> = (0..fm.n_cols())
            .map(|j| {
                let c = fm.column(j);
                let m = c.iter().sum::<f64>() / nf;
                let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf).sqrt();
                c.iter().map(|v| (v - m) / sd).collect()
            })
            .collect();
        let b = model.standardized_beta();
        let r: Vec<f64> =
            (0..fm.n_rows()).map(|i| fm.y[i] - ybar - (0..fm.n_cols()).map(|j| z[j][i] * b[j]).sum::<f64>()).collect();
        for j in 0..fm.n_cols() {
            let g = z[j].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / nf;
            let violation = if b[j] != 0.0 { (g.abs() - lambda).abs() } else { (g.abs() - lambda).max(0.0) };
            worst_kkt = worst_kkt.max(violation);
        }
    }
    verdict(
        3,
        "LASSO matches OLS at zero penalty and satisfies KKT",
        ols_err < 1e-6 && worst_kkt <= 1e-4,
        format!("OLS L-inf {ols_err:.2e}; worst KKT violation {worst_kkt:.2e} over 20 problems"),
    );
}

#[test]
fn c04_arima_recovery() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut x = Vec::with_capacity(1000);
    let mut prev = 0.0;
    for _ in 0..1100 {
        prev = 0.8 * prev + normal(&mut rng);
        x.push(prev);
    }
    let x = x.split_off(100);
    let series = SeriesView { store_id: 1, dates: (0..x.len() as i32).map(|i| Day(16000 + i)).collect(), log_sales: x };
    let ar1 = fit_arima_order(&series, ArimaOrder { p: 1, d: 0, q: 0 }).unwrap();
    let phi = ar1.phi[0];
    let selected = fit_arima(&series, 3, 1, 2).unwrap();
    let o = selected.order;
    let elapsed = start.elapsed();
    verdict(
        4,
        "ARIMA recovers AR(1)",
        (0.7..=0.9).contains(&phi) && (1..=3).contains(&o.p) && o.d == 0 && elapsed < Duration::from_secs(30),
        format!(
            "phi {phi:.4}; selected ({}, {}, {}) with phi[0] {:.4}; {:.1}s",
            o.p,
            o.d,
            o.q,
            selected.phi[0],
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c05_gbt_sanity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let y: Vec<f64> = rows.iter().map(|r| (6.0 * r[0]).sin() + r[1] * r[1] + 0.1 * normal(&mut rng)).collect();
    let fm = FeatureMatrix::from_rows(vec!["a".into(), "b".into()], &rows, y.clone()).unwrap();
    let params = GbtParams { subsample: 1.0, ..GbtParams::default() };
    let staged = fit_gbt(&fm, &params).unwrap().predict_staged(&fm).unwrap();
    let loss = |p: &[f64]| p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let losses: Vec<f64> = staged.iter().map(|p| loss(p)).collect();
    let monotone = losses.windows(2).all(|w| w[1] <= w[0]);

    let stump = GbtParams { n_trees: 1, max_depth: 0, learning_rate: 1.0, subsample: 1.0, ..GbtParams::default() };
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let preds = fit_gbt(&fm, &stump).unwrap().predict(&fm).unwrap();
    let exact = preds.iter().all(|p| *p == mean);
    verdict(
        5,
        "GBT loss non-increasing; depth-0 tree is the mean",
        monotone && exact,
        format!(
            "loss {:.4} -> {:.4} over {} stages; stump exact {exact}",
            losses[0],
            losses[losses.len() - 1],
            losses.len()
        ),
    );
}

fn brute_force_tau(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let (mut concordant, mut discordant, mut tied_u, mut tied_v) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in 0..n {
            if j <= i {
                continue;
            }
            let du = u[j] - u[i];
            let dv = v[j] - v[i];
            if du == 0.0 {
                tied_u += 1;
            }
            if dv == 0.0 {
                tied_v += 1;
            }
            if du * dv > 0.0 {
                concordant += 1;
            } else if du * dv < 0.0 {
                discordant += 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = (((pairs - tied_u) as f64) * ((pairs - tied_v) as f64)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (concordant - discordant) as f64 / denom
    }
}

#[test]
fn c06_kendall_tau_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for k in 0..50 {
        let n = rng.random_range(2..=200);
        let (u, v): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|_| {
                if k % 2 == 0 {
                    (f64::from(rng.random_range(0..6u8)), f64::from(rng.random_range(0..6u8)))
                } else {
                    let a = normal(&mut rng);
                    (a, 0.5 * a + normal(&mut rng))
                }
            })
            .unzip();
        if kendall_tau(&u, &v).unwrap() != brute_force_tau(&u, &v) {
            mismatches += 1;
        }
    }
    verdict(
        6,
        "Kendall's tau equals a brute-force counter",
        mismatches == 0,
        format!("{mismatches} mismatches in 50 datasets"),
    );
}

#[test]
fn c07_t_copula_round_trip() {
    let start = Instant::now();
    let draws = sample_copula(&CopulaParams::student_t(0.5, 5.0), 5000, 42).unwrap();
    let fit = fit_t_copula(&pseudo_observations(draws.columns()).unwrap()).unwrap();
    let CopulaParams::StudentT(t) = fit.params else { panic!("t fit returned {:?}", fit.params) };
    let g = 400;
    let mut mass = 0.0;
    for i in 0..g {
        for j in 0..g {
            mass += copula_pdf(&fit.params, (i as f64 + 0.5) / g as f64, (j as f64 + 0.5) / g as f64).unwrap();
        }
    }
    mass /= (g * g) as f64;
    let elapsed = start.elapsed();
    verdict(
        7,
        "t-copula round trip",
        (0.45..=0.55).contains(&t.rho)
            && (3.0..=8.0).contains(&t.nu)
            && (mass - 1.0).abs() <= 0.02
            && elapsed < Duration::from_secs(60),
        format!("rho {:.4}, nu {:.3}, grid mass {mass:.4}; {:.1}s", t.rho, t.nu, elapsed.as_secs_f64()),
    );
}

#[test]
fn c08_gamma_marginal() {
    let median = GammaMarginal::new(1.0, 1.0).unwrap().quantile(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dist = Gamma::new(2.5, 2.0).unwrap();
    let x: Vec<f64> = (0..5000).map(|_| dist.sample(&mut rng)).collect();
    let k = fit_gamma_marginal(&x).unwrap().shape;
    verdict(
        8,
        "gamma inverse CDF and MLE",
        (median - std::f64::consts::LN_2).abs() < 1e-8 && (k / 2.5 - 1.0).abs() <= 0.10,
        format!("exponential median error {:.1e}; shape {k:.4} vs 2.5", (median - std::f64::consts::LN_2).abs()),
    );
}

fn edge(tree: usize, root: usize, var: usize, conditioning: Vec<usize>, copula: PairCopula) -> VineEdge {
    VineEdge {
        tree,
        root,
        var,
        conditioning,
        label: format!("{var},{root}"),
        copula,
        tau: 0.0,
        log_likelihood: 0.0,
        aic: 0.0,
        independence_accepted: false,
    }
}

#[test]
fn c09_cvine_round_trip() {
    let truth = CVineSpec {
        order: vec![0, 1, 2],
        names: vec!["a".into(), "b".into(), "c".into()],
        trees: vec![
            vec![
                edge(0, 0, 1, vec![], PairCopula::Gaussian { rho: 0.7 }),
                edge(0, 0, 2, vec![], PairCopula::StudentT { rho: 0.5, nu: 6.0 }),
            ],
            vec![edge(1, 1, 2, vec![0], PairCopula::Gaussian { rho: 0.2 })],
        ],
        tree1_taus: vec![rho_to_tau(0.7), rho_to_tau(0.5)],
        n_obs: 0,
        jittered: vec![],
    };
    let data = sample_cvine(&truth, 5000, 9).unwrap();
    let names = truth.names.clone();
    let fitted = fit_cvine(&pseudo_observations(data.columns()).unwrap(), &all_families(), &names).unwrap();
    let resampled = sample_cvine(&fitted, 5000, 10).unwrap();
    let mut worst: f64 = 0.0;
    for (e, &true_tau) in truth.trees[0].iter().zip(&truth.tree1_taus) {
        let f = fitted.edge(0, e.var).map(|f| f.tau).unwrap_or(f64::NAN);
        let r = kendall_tau(resampled.column(0), resampled.column(e.var)).unwrap();
        worst = worst.max((f - true_tau).abs()).max((r - true_tau).abs());
    }
    let root_ok = fitted.order[0] == 0;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let independent: Vec<Vec<f64>> = (0..3).map(|_| (0..1000).map(|_| rng.random::<f64>()).collect()).collect();
    let ind = fit_cvine(&pseudo_observations(&independent).unwrap(), &all_families(), &names).unwrap();
    let all_independent = ind.trees.iter().flatten().all(|e| e.copula == PairCopula::Independence);
    verdict(
        9,
        "C-vine round trip and independence detection",
        root_ok && worst <= 0.05 && all_independent,
        format!(
            "root {}; worst tree-1 tau error {worst:.4}; independent data all Independence: {all_independent}",
            fitted.order[0]
        ),
    );
}

fn regression_data(seed: u64, n: usize, truth: &[f64; 3], outliers: bool) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let level = 6.0 + 5.0 * rng.random::<f64>();
        let promo = f64::from(u8::from(rng.random::<f64>() < 0.4));
        let mut v = truth[0] + truth[1] * level + truth[2] * promo + 0.15 * normal(&mut rng);
        if outliers && i % 100 == 0 {
            v += 5.0;
        }
        rows.push(vec![level, promo]);
        y.push(v);
    }
    FeatureMatrix::from_rows(vec![MEAN_LOG_SALES.into(), PROMO.into()], &rows, y).unwrap()
}

fn ols(fm: &FeatureMatrix) -> Vec<f64> {
    let n = fm.n_rows();
    let x = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { fm.get(i, j - 1) });
    let y = DVector::from_vec(fm.y.clone());
    (x.transpose() * &x).lu().solve(&(x.transpose() * y)).unwrap().iter().copied().collect()
}

#[test]
fn c10_gibbs_regression() {
    let truth = [0.5, 0.95, 0.3];
    let fm = regression_data(10, 800, &truth, false);
    let opts = McmcOptions { iters: 6000, burn_in: 1000, seed: 10 };
    let chain = gibbs_gaussian_regression(&fm, &RegressionPrior::weak(3), &opts).unwrap();
    let summary = posterior_summary(&chain).unwrap();
    let names = chain.coefficient_names().to_vec();
    let worst_sds =
        names.iter().zip(&truth).map(|(n, t)| (summary[n].mean - t).abs() / summary[n].sd).fold(0.0, f64::max);
    let flat = RegressionPrior::scaled_identity(3, 1e-8);
    let flat_chain = gibbs_gaussian_regression(&fm, &flat, &opts).unwrap();
    let flat_summary = posterior_summary(&flat_chain).unwrap();
    let beta_ols = ols(&fm);
    let ols_gap = names.iter().zip(&beta_ols).map(|(n, b)| (flat_summary[n].mean - b).abs()).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let iid: Vec<f64> = (0..5000).map(|_| normal(&mut rng)).collect();
    let mut prev = 0.0;
    let ar: Vec<f64> = (0..10_000)
        .map(|_| {
            prev = 0.9 * prev + (1.0f64 - 0.81).sqrt() * normal(&mut rng);
            prev
        })
        .collect();
    let (ess_iid, ess_ar) = (effective_sample_size(&iid), effective_sample_size(&ar));
    verdict(
        10,
        "Gibbs regression recovery, flat-prior OLS agreement, ESS",
        worst_sds <= 3.0 && ols_gap < 0.02 && (4000.0..=6000.0).contains(&ess_iid) && (350.0..=750.0).contains(&ess_ar),
        format!("worst |mean-truth|/sd {worst_sds:.2}; OLS gap {ols_gap:.2e}; ESS iid {ess_iid:.0}, AR(1) {ess_ar:.0}"),
    );
}

#[test]
fn c11_heavy_tail_robustness() {
    let truth = [0.5, 0.95, 0.3];
    let fm = regression_data(42, 1000, &truth, true);
    let opts = McmcOptions { iters: 4000, burn_in: 1000, seed: 42 };
    let prior = RegressionPrior::weak(3);
    let distance = |chain: &salescast::bayes::McmcChain| {
        let s = posterior_summary(chain).unwrap();
        chain.coefficient_names().iter().zip(&truth).map(|(n, t)| (s[n].mean - t).powi(2)).sum::<f64>().sqrt()
    };
    let g = distance(&gibbs_gaussian_regression(&fm, &prior, &opts).unwrap());
    let t = distance(&fit_student_t_regression(&fm, &prior, &opts).unwrap());
    verdict(
        11,
        "Student-t posterior closer to truth under outliers",
        t < g,
        format!("L2 error t {t:.4} < gaussian {g:.4}"),
    );
}

#[test]
fn c12_value_at_risk() {
    let ints: Vec<f64> = (1..=100).map(f64::from).collect();
    let exact = value_at_risk(&ints, 0.95).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let z: Vec<f64> = (0..100_000).map(|_| normal(&mut rng)).collect();
    let mc = value_at_risk(&z, 0.95).unwrap();
    verdict(
        12,
        "value at risk",
        exact == 95.0 && (mc - 1.6449).abs() <= 0.03,
        format!("VaR(1..100) {exact}; N(0,1) VaR {mc:.4}"),
    );
}

fn artifacts(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for name in ["report.json", "report.csv"] {
        if dir.join(name).exists() {
            out.push(name.to_string());
        }
    }
    let mut figs: Vec<String> = std::fs::read_dir(dir.join("figures"))
        .map(|rd| rd.filter_map(|e| e.ok()).map(|e| format!("figures/{}", e.file_name().to_string_lossy())).collect())
        .unwrap_or_default();
    figs.sort();
    out.extend(figs);
    out
}

#[test]
fn c13_reproducible_from_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |s: &str| root.join(s).display().to_string();
    let small = ["--synth-days", "300", "--synth-stores", "2"];
    let mut commands: Vec<(&str, Vec<String>)> = vec![
        ("synth", vec!["--stores".into(), "2".into(), "--days".into(), "120".into()]),
        ("forecast", vec!["--method".into(), "gbt".into()]),
        ("blend", vec![]),
        ("stack", vec![]),
        ("backtest", vec!["--all-stores".into(), "--methods".into(), "arima,gbt_ts,gbt_iid,lasso".into()]),
        ("copula-fit", vec!["--family".into(), "gaussian".into()]),
        ("vine-fit", vec!["--samples".into(), "300".into(), "--max-rows".into(), "400".into()]),
        ("bayes-gaussian", vec!["--iters".into(), "1200".into(), "--burn-in".into(), "200".into()]),
        ("bayes-student", vec!["--iters".into(), "1200".into(), "--burn-in".into(), "200".into()]),
    ];
    for (cmd, args) in commands.iter_mut() {
        if !matches!(*cmd, "synth") {
            args.extend(small.iter().map(|s| s.to_string()));
        }
    }
    commands.push(("ingest", vec!["--input".into(), format!("{}/panel.csv", p("synth"))]));
    commands.push((
        "copula-sample",
        vec!["--model".into(), format!("{}/model.json", p("copula-fit")), "--n".into(), "500".into()],
    ));
    commands.push(("report", vec!["--from".into(), p("backtest")]));

    let mut failures = Vec::new();
    let mut compared = 0;
    for (cmd, args) in &commands {
        let first = p(cmd);
        let mut argv =
            vec!["salescast".to_string(), cmd.to_string(), "--deterministic".into(), "--out".into(), first.clone()];
        argv.extend(args.iter().cloned());
        if salescast::cli::run(&argv) != 0 {
            failures.push(format!("{cmd}: first run failed"));
            continue;
        }
        let again = p(&format!("{cmd}-again"));
        let snapshot = format!("{first}/config.txt");
        let rerun = ["salescast", "--config", snapshot.as_str(), "--out", again.as_str()];
        if salescast::cli::run(rerun) != 0 {
            failures.push(format!("{cmd}: rerun failed"));
            continue;
        }
        let files = artifacts(Path::new(&first));
        if files.iter().all(|f| !f.ends_with(".svg")) {
            failures.push(format!("{cmd}: no figures"));
        }
        for f in files {
            let a = std::fs::read(Path::new(&first).join(&f)).unwrap();
            let b = std::fs::read(Path::new(&again).join(&f)).unwrap_or_default();
            compared += 1;
            if a != b {
                failures.push(format!("{cmd}: {f} differs"));
            }
        }
    }
    verdict(
        13,
        "every command reproduces byte-identical reports and SVGs from its snapshot",
        failures.is_empty(),
        format!("{} commands, {compared} files compared; problems: {failures:?}", commands.len()),
    );
}
