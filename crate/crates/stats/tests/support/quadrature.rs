//! Test-only numerical oracle: adaptive Gauss–Kronrod quadrature of the
//! normal, Student-t, F and beta densities.
//!
//! Nothing here calls into the library under test. The log-gamma used for
//! normalising constants is a shifted Stirling series, unrelated to the
//! library's Lanczos approximation.

#![allow(dead_code)]

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth == 0 || (b - a).abs() < 1e-15 {
        return value;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// ∫_a^b f, to roughly `tol` absolute.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    adapt(&f, a, b, tol, 60)
}

/// ln Γ(x) for x > 0 by shifting to x ≥ 30 and applying the Stirling series.
pub fn ln_gamma_stirling(x: f64) -> f64 {
    let mut shift = 0.0;
    let mut z = x;
    while z < 30.0 {
        shift += z.ln();
        z += 1.0;
    }
    let z2 = z * z;
    let series = 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z * z2 * z2)
        - 1.0 / (1680.0 * z * z2 * z2 * z2);
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series - shift
}

const TOL: f64 = 1e-14;

pub fn normal_cdf(x: f64) -> f64 {
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    0.5 + integrate(pdf, 0.0, x, TOL)
}

pub fn t_cdf(x: f64, nu: f64) -> f64 {
    let ln_c = ln_gamma_stirling(0.5 * (nu + 1.0))
        - ln_gamma_stirling(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln();
    let pdf = |t: f64| (ln_c - 0.5 * (nu + 1.0) * (1.0 + t * t / nu).ln()).exp();
    0.5 + integrate(pdf, 0.0, x, TOL)
}

/// F CDF via the substitution f = u², which removes the integrable
/// singularity at zero for d1 < 2.
pub fn f_cdf(f: f64, d1: f64, d2: f64) -> f64 {
    let ln_c = 0.5 * d1 * (d1 / d2).ln() - ln_beta(0.5 * d1, 0.5 * d2);
    let pdf_u = |u: f64| {
        if u == 0.0 {
            return if d1 == 1.0 { 2.0 * ln_c.exp() } else { 0.0 };
        }
        let x = u * u;
        let ln_pdf = ln_c + (0.5 * d1 - 1.0) * x.ln() - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln();
        2.0 * u * ln_pdf.exp()
    };
    integrate(pdf_u, 0.0, f.sqrt(), TOL)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma_stirling(a) + ln_gamma_stirling(b) - ln_gamma_stirling(a + b)
}

/// I_x(a, b) for a, b ≥ 1.
pub fn beta_cdf(x: f64, a: f64, b: f64) -> f64 {
    let ln_b = ln_beta(a, b);
    let pdf = |t: f64| {
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        ((a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln() - ln_b).exp()
    };
    integrate(pdf, 0.0, x, 1e-15)
}
