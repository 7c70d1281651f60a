//! Small numerical helpers: log-gamma, the regularized lower incomplete
//! gamma function, and the chi-squared CDF/quantile built on top of them.
//!
//! The quantile is what turns a gate probability into the elliptic gate
//! threshold gamma; it has to work for arbitrary probabilities, not just the
//! tabulated ones, so it is computed rather than looked up.

/// Natural log of the gamma function (Lanczos approximation, g = 7).
///
/// Accurate to ~1e-13 for positive arguments, which is far tighter than
/// anything downstream needs.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // Reflection keeps the approximation in its sweet spot.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
///
/// Series expansion for x < a + 1, continued fraction otherwise; both
/// converge quickly for the chi-squared arguments seen here.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    let ln_ga = ln_gamma(a);
    if x < a + 1.0 {
        // Series: P(a,x) = x^a e^-x / Gamma(a) * sum x^n / (a)_n+1
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut n = a;
        for _ in 0..500 {
            n += 1.0;
            term *= x / n;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (sum.ln() + a * x.ln() - x - ln_ga).exp()
    } else {
        // Lentz continued fraction for Q(a,x); P = 1 - Q.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (a * x.ln() - x - ln_ga).exp() * h;
        1.0 - q
    }
}

/// CDF of the chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(dof as f64 / 2.0, x / 2.0)
}

fn chi2_pdf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = dof as f64 / 2.0;
    (-x / 2.0 + (k - 1.0) * x.ln() - k * 2.0_f64.ln() - ln_gamma(k)).exp()
}

/// Quantile of the chi-squared distribution: smallest x with CDF(x) >= p.
///
/// Wilson-Hilferty starting point refined by Newton steps on the CDF;
/// `p` must lie strictly inside (0, 1).
pub fn chi2_quantile(p: f64, dof: usize) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile probability must be in (0,1)");
    assert!(dof >= 1);
    let k = dof as f64;
    // Wilson-Hilferty: chi2 ~ k * (1 - 2/(9k) + z * sqrt(2/(9k)))^3
    let z = normal_quantile(p);
    let c = 2.0 / (9.0 * k);
    let mut x = k * (1.0 - c + z * c.sqrt()).powi(3);
    if x <= 0.0 {
        x = 1e-6;
    }
    for _ in 0..60 {
        let err = chi2_cdf(x, dof) - p;
        let slope = chi2_pdf(x, dof);
        if slope <= 0.0 {
            break;
        }
        let step = err / slope;
        x -= step;
        if x <= 0.0 {
            x = 1e-9;
        }
        if step.abs() < 1e-12 * x.max(1.0) {
            break;
        }
    }
    x
}

/// Standard normal quantile (Acklam's rational approximation, ~1e-9).
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
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
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    debug_assert!(p > 0.0 && p < 1.0);
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
