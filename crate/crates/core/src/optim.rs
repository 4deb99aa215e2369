//! Derivative-free minimization and bracketed root finding.

/// Outcome of a Nelder–Mead run.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Relative spread of objective values across the simplex at which to stop.
    pub rel_tol: f64,
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_iter: 500, rel_tol: 1e-8, initial_step: 0.1 }
    }
}

fn eval<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Nelder–Mead simplex minimization. Non-finite objective values are treated
/// as `+inf` so the simplex retreats from infeasible regions.
pub fn nelder_mead<F>(mut f: F, start: &[f64], opts: SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = start.len();
    if dim == 0 {
        let value = eval(&mut f, start);
        return SimplexResult { x: vec![], value, iterations: 0, converged: true };
    }
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(start.to_vec());
    for i in 0..dim {
        let mut p = start.to_vec();
        let step = if p[i].abs() > 1e-8 { opts.initial_step * p[i].abs() } else { opts.initial_step * 0.5 };
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(&mut f, p)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        // order ascending; ties keep insertion order
        let mut idx: Vec<usize> = (0..=dim).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[dim];
        if best.is_finite() && worst.is_finite() {
            let spread = (worst - best).abs();
            if spread <= opts.rel_tol * (best.abs() + opts.rel_tol) {
                converged = true;
                break;
            }
        }
        iterations += 1;

        let mut centroid = vec![0.0; dim];
        for p in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / dim as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[dim]).map(|(c, w)| c + t * (c - w)).collect() };

        let reflected = along(1.0);
        let fr = eval(&mut f, &reflected);
        if fr < values[0] {
            let expanded = along(2.0);
            let fe = eval(&mut f, &expanded);
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[dim] {
            let c = along(0.5);
            let v = eval(&mut f, &c);
            (c, v)
        } else {
            let c = along(-0.5);
            let v = eval(&mut f, &c);
            (c, v)
        };
        if fc < values[dim].min(fr) {
            simplex[dim] = contracted;
            values[dim] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best_point = simplex[0].clone();
        for i in 1..=dim {
            for (x, b) in simplex[i].iter_mut().zip(&best_point) {
                *x = b + 0.5 * (*x - b);
            }
            values[i] = eval(&mut f, &simplex[i]);
        }
    }
    let (bi, _) = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty simplex");
    SimplexResult { x: simplex[bi].clone(), value: values[bi], iterations, converged }
}

/// Golden-section search for the minimum of a unimodal function on `[lo, hi]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (hi - lo).abs() > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Root of a monotone function on a bracket `[lo, hi]` with `f(lo) <= 0 <= f(hi)`
/// (or the reverse), using secant steps guarded by bisection.
pub fn bracketed_root<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, abs_tol: f64) -> f64 {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    let increasing = flo < fhi;
    for i in 0..400 {
        if (hi - lo).abs() <= abs_tol {
            break;
        }
        let mut x = lo - flo * (hi - lo) / (fhi - flo);
        let margin = 0.01 * (hi - lo);
        // alternate secant and bisection so slow secant progress cannot stall
        if !x.is_finite() || x <= lo + margin || x >= hi - margin || i % 2 == 1 {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == increasing {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_finds_rosenbrock_minimum() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(rosen, &[-1.2, 1.0], SimplexOptions { max_iter: 5000, rel_tol: 1e-14, initial_step: 0.1 });
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn simplex_avoids_infeasible_region() {
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::INFINITY } else { (x[0].ln() - 1.0).powi(2) };
        let r = nelder_mead(f, &[0.5], SimplexOptions::default());
        assert!((r.x[0] - std::f64::consts::E).abs() < 1e-3);
    }

    #[test]
    fn golden_and_root() {
        let (x, _) = golden_section(|x| (x - 0.3).powi(2), -1.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        let r = bracketed_root(|x| x * x * x - 2.0, 0.0, 2.0, 1e-13);
        assert!((r - 2f64.cbrt()).abs() < 1e-12);
        let r = bracketed_root(|x| 1.0 - x, 0.0, 3.0, 1e-13);
        assert!((r - 1.0).abs() < 1e-12);
    }
}
