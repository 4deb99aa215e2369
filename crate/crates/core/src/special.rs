//! Special functions: log-gamma, polygammas, incomplete gamma and beta, and
//! the normal and Student-t distribution functions built on them.

use std::f64::consts::{FRAC_PI_2, PI};

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (reflection below 0.5).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + LANCZOS_G + 0.5;
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln()
        - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
}

pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv + 0.5 * inv2 + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
}

fn gamma_prefactor(a: f64, x: f64) -> f64 {
    (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * gamma_prefactor(a, x)
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    gamma_prefactor(a, x) * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        1.0 + gamma_p(0.5, x * x)
    }
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

/// Standard normal quantile: rational approximation plus one Halley step.
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -norm_ppf(1.0 - p);
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    let x = if p < 0.024_25 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = norm_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`, taking `y = 1 - x` separately so
/// callers can pass an accurately computed complement.
pub fn beta_inc(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_bt = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    let bt = ln_bt.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - bt * beta_continued_fraction(b, a, y) / b
    }
}

/// Upper tail `P(T > t)` of Student's t for `t >= 0`.
fn t_upper_tail(t: f64, nu: f64) -> f64 {
    let t2 = t * t;
    let x = nu / (nu + t2);
    let y = t2 / (nu + t2);
    0.5 * beta_inc(0.5 * nu, 0.5, x, y)
}

pub fn t_cdf(t: f64, nu: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    if t >= 0.0 {
        1.0 - t_upper_tail(t, nu)
    } else {
        t_upper_tail(-t, nu)
    }
}

pub fn t_ln_pdf(t: f64, nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln() - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p()
}

/// Student-t quantile: Hill's approximation refined by second-order Taylor
/// steps on the exact tail probability.
pub fn t_ppf(p: f64, nu: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    let (tail, sign) = if p < 0.5 { (p, -1.0) } else { (1.0 - p, 1.0) };
    let two_tail = 2.0 * tail;

    let mut q = if (nu - 2.0).abs() < 1e-12 {
        (2.0 / (two_tail * (2.0 - two_tail)) - 2.0).sqrt()
    } else if (nu - 1.0).abs() < 1e-12 {
        1.0 / (two_tail * FRAC_PI_2).tan()
    } else {
        let a = 1.0 / (nu - 0.5);
        let b = 48.0 / (a * a);
        let mut c = ((20_700.0 * a / b - 98.0) * a - 16.0) * a + 96.36;
        let d = ((94.5 / (b + c) - 3.0) / b + 1.0) * (a * FRAC_PI_2).sqrt() * nu;
        let y = (d * two_tail).powf(2.0 / nu);
        if (nu < 2.1 && two_tail > 0.5) || y > 0.05 + a {
            let x = norm_ppf(0.5 * two_tail);
            let y = x * x;
            if nu < 5.0 {
                c += 0.3 * (nu - 4.5) * (x + 0.6);
            }
            c = (((0.05 * d * x - 5.0) * x - 7.0) * x - 2.0) * x + b + c;
            let y = (((((0.4 * y + 6.3) * y + 36.0) * y + 94.5) / c - y - 3.0) / b + 1.0) * x;
            (nu * (a * y * y).exp_m1()).sqrt()
        } else {
            let y = ((1.0 / (((nu + 6.0) / (nu * y) - 0.089 * d - 0.822) * (nu + 2.0) * 3.0) + 0.5 / (nu + 4.0)) * y
                - 1.0)
                * (nu + 1.0)
                / (nu + 2.0)
                + 1.0 / y;
            (nu * y).sqrt()
        }
    };
    if !q.is_finite() || q < 0.0 {
        q = norm_ppf(1.0 - tail).abs();
    }
    for _ in 0..20 {
        let dens = t_ln_pdf(q, nu).exp();
        if dens <= 0.0 {
            break;
        }
        let step = (t_upper_tail(q, nu) - tail) / dens;
        if !step.is_finite() {
            break;
        }
        q += step * (1.0 + step * q * (nu + 1.0) / (2.0 * (q * q + nu)));
        if step.abs() <= 1e-14 * q.abs().max(1e-300) {
            break;
        }
    }
    sign * q
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
    use statrs::function::gamma as sg;

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            assert_relative_eq!(
                ln_gamma(n as f64 + 1.0),
                {
                    fact *= n as f64;
                    fact.ln()
                },
                max_relative = 1e-13,
                epsilon = 1e-14
            );
        }
        assert_relative_eq!(ln_gamma(0.5), PI.sqrt().ln(), epsilon = 1e-14);
    }

    #[test]
    fn polygammas_match_reference() {
        // 50-digit reference values
        let table = [
            (0.1, -10.423754940411076232),
            (0.5, -1.9635100260214234794),
            (1.0, -0.57721566490153286061),
            (2.5, 0.70315664064524318723),
            (7.0, 1.8727843350984671394),
            (30.0, 3.3844381326855248766),
            (200.0, 5.2958152832199116155),
        ];
        for (x, psi) in table {
            assert_relative_eq!(digamma(x), psi, max_relative = 1e-13);
            assert_relative_eq!(digamma(x), sg::digamma(x), max_relative = 1e-10);
            // trigamma by central difference of digamma
            let h = 1e-5 * x.max(1.0);
            let fd = (sg::digamma(x + h) - sg::digamma(x - h)) / (2.0 * h);
            assert_relative_eq!(trigamma(x), fd, max_relative = 1e-6);
        }
        assert_relative_eq!(trigamma(1.0), PI * PI / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn incomplete_gamma_matches_reference() {
        for &a in &[0.3, 1.0, 2.5, 10.0, 50.0] {
            for &x in &[0.01, 0.5, 1.0, 3.0, 12.0, 60.0] {
                let reference = sg::gamma_lr(a, x);
                assert_relative_eq!(gamma_p(a, x), reference, epsilon = 1e-12);
                assert_relative_eq!(gamma_p(a, x) + gamma_q(a, x), 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn normal_functions_match_reference() {
        let n = Normal::new(0.0, 1.0).unwrap();
        for &x in &[-8.0, -3.0, -1.0, -0.1, 0.0, 0.7, 2.0, 5.0] {
            assert_relative_eq!(norm_cdf(x), n.cdf(x), max_relative = 1e-10, epsilon = 1e-300);
        }
        assert_relative_eq!(norm_cdf(-8.0), 6.2209605742717841235e-16, max_relative = 1e-13);
        for &p in &[1e-12, 1e-6, 0.01, 0.2, 0.5, 0.8, 0.975, 1.0 - 1e-9] {
            assert_relative_eq!(norm_ppf(p), n.inverse_cdf(p), max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(norm_cdf(norm_ppf(p)), p, max_relative = 1e-12);
        }
    }

    #[test]
    fn student_t_matches_reference() {
        for &nu in &[1.0, 2.0, 2.5, 3.0, 5.0, 12.0, 40.0, 300.0] {
            let dist = StudentsT::new(0.0, 1.0, nu).unwrap();
            for &t in &[-20.0, -3.0, -0.5, 0.0, 0.2, 1.5, 8.0] {
                assert_relative_eq!(t_cdf(t, nu), dist.cdf(t), max_relative = 1e-10, epsilon = 1e-14);
            }
            for &p in &[1e-8, 1e-4, 0.01, 0.3, 0.5, 0.6, 0.9, 0.999] {
                let q = t_ppf(p, nu);
                assert_relative_eq!(t_cdf(q, nu), p, max_relative = 1e-10);
            }
        }
    }
}
