//! Normal, Student-t and F distribution functions and quantiles.
//!
//! Degrees of freedom may be fractional throughout; the Welch test produces
//! values such as 17.69 and the decision layer uses them unrounded.

use serde::{Deserialize, Serialize};

use crate::special::{incomplete_beta_split, reg_upper_gamma};
use crate::{Result, StatError};

/// Tolerance on `|cdf(quantile(p)) - p|` that a quantile must meet.
const QUANTILE_TOL: f64 = 1e-9;
const BISECTION_STEPS: usize = 400;

/// Standard normal CDF, Φ(z) = ½·erfc(-z/√2) via Q(½, z²/2).
pub fn normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let q = reg_upper_gamma(0.5, 0.5 * z * z).unwrap_or(0.0);
    if z < 0.0 {
        0.5 * q
    } else {
        1.0 - 0.5 * q
    }
}

/// Upper tail 1 - Φ(z), computed without cancellation for large z.
pub fn normal_sf(z: f64) -> f64 {
    normal_cdf(-z)
}

fn check_df(name: &str, df: f64) -> Result<()> {
    if df > 0.0 && !df.is_nan() {
        Ok(())
    } else {
        Err(StatError::Domain(format!("{name} must be positive, got {df}")))
    }
}

/// Half of the two-sided tail mass beyond |t|.
fn t_one_tail(t: f64, df: f64) -> Result<f64> {
    check_df("degrees of freedom", df)?;
    if t.is_nan() {
        return Err(StatError::Domain("t argument is NaN".into()));
    }
    if df.is_infinite() {
        return Ok(normal_sf(t.abs()));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let t2 = t * t;
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    Ok(0.5 * incomplete_beta_split(x, y, 0.5 * df, 0.5)?)
}

/// Student-t CDF with (possibly fractional) `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> Result<f64> {
    let tail = t_one_tail(t, df)?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// Student-t upper tail P(T > t).
pub fn t_sf(t: f64, df: f64) -> Result<f64> {
    let tail = t_one_tail(t, df)?;
    Ok(if t > 0.0 { tail } else { 1.0 - tail })
}

fn f_args(f: f64, df1: f64, df2: f64) -> Result<(f64, f64)> {
    check_df("numerator degrees of freedom", df1)?;
    check_df("denominator degrees of freedom", df2)?;
    if !(f >= 0.0) {
        return Err(StatError::Domain(format!("F argument must be >= 0, got {f}")));
    }
    if f.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let denom = df1 * f + df2;
    Ok((df1 * f / denom, df2 / denom))
}

/// F distribution CDF.
pub fn f_cdf(f: f64, df1: f64, df2: f64) -> Result<f64> {
    let (x, y) = f_args(f, df1, df2)?;
    incomplete_beta_split(x, y, 0.5 * df1, 0.5 * df2)
}

/// F distribution upper tail P(F > f).
pub fn f_sf(f: f64, df1: f64, df2: f64) -> Result<f64> {
    let (x, y) = f_args(f, df1, df2)?;
    incomplete_beta_split(y, x, 0.5 * df2, 0.5 * df1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Distribution {
    Normal,
    StudentT { df: f64 },
    F { df1: f64, df2: f64 },
}

impl Distribution {
    pub fn cdf(&self, x: f64) -> Result<f64> {
        match *self {
            Distribution::Normal => Ok(normal_cdf(x)),
            Distribution::StudentT { df } => t_cdf(x, df),
            Distribution::F { df1, df2 } => f_cdf(x, df1, df2),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Distribution::Normal => Ok(()),
            Distribution::StudentT { df } => check_df("degrees of freedom", df),
            Distribution::F { df1, df2 } => {
                check_df("numerator degrees of freedom", df1)?;
                check_df("denominator degrees of freedom", df2)
            }
        }
    }
}

/// Inverse CDF by bracket expansion followed by bisection to float resolution.
pub fn quantile(dist: Distribution, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatError::Domain(format!("quantile probability must lie in (0,1), got {p}")));
    }
    dist.validate()?;
    let symmetric = !matches!(dist, Distribution::F { .. });
    if symmetric && p == 0.5 {
        return Ok(0.0);
    }

    let (mut lo, mut hi) = if symmetric { (-1.0, 1.0) } else { (0.0, 1.0) };
    let mut grow = 0;
    while symmetric && dist.cdf(lo)? > p {
        lo *= 2.0;
        grow += 1;
        if grow > 1100 {
            return Err(StatError::NonConvergence(format!("no lower bracket for p={p}")));
        }
    }
    grow = 0;
    while dist.cdf(hi)? < p {
        lo = lo.max(if symmetric { lo } else { hi });
        hi *= 2.0;
        grow += 1;
        if grow > 1100 {
            return Err(StatError::NonConvergence(format!("no upper bracket for p={p}")));
        }
    }

    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dist.cdf(mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick whichever bracket end lands closer in probability
    let (clo, chi) = (dist.cdf(lo)?, dist.cdf(hi)?);
    let (x, c) = if (clo - p).abs() <= (chi - p).abs() { (lo, clo) } else { (hi, chi) };
    if (c - p).abs() > QUANTILE_TOL {
        return Err(StatError::NonConvergence(format!(
            "quantile for p={p} stalled at x={x} with cdf={c}"
        )));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_centres() {
        assert_eq!(normal_cdf(0.0), 0.5);
        for df in [0.3, 1.0, 4.07, 17.69, 1e6] {
            assert!((t_cdf(0.0, df).unwrap() - 0.5).abs() < 1e-15);
            assert_eq!(quantile(Distribution::StudentT { df }, 0.5).unwrap(), 0.0);
        }
        assert_eq!(quantile(Distribution::Normal, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn cauchy_closed_form() {
        // t with one degree of freedom is Cauchy: F(t) = 1/2 + atan(t)/π
        for &t in &[-30.0, -2.0, -0.1, 0.4, 1.0, 7.5] {
            let exact = 0.5 + f64::atan(t) / std::f64::consts::PI;
            assert!((t_cdf(t, 1.0).unwrap() - exact).abs() < 1e-14, "t={t}");
        }
    }

    #[test]
    fn t_two_df_closed_form() {
        // df = 2: F(t) = 1/2 + t / (2 sqrt(2 + t^2))
        for &t in &[-5.0, -0.3, 0.0, 2.2, 40.0] {
            let exact = 0.5 + t / (2.0 * f64::sqrt(2.0 + t * t));
            assert!((t_cdf(t, 2.0).unwrap() - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn f_two_two_closed_form() {
        // F(2,2): cdf = f / (1 + f)
        for &f in &[0.0, 0.2, 1.0, 3.7, 100.0] {
            assert!((f_cdf(f, 2.0, 2.0).unwrap() - f / (1.0 + f)).abs() < 1e-14);
        }
    }

    #[test]
    fn tails_complement_cdfs() {
        for &x in &[-3.1, -0.2, 0.0, 1.4, 6.0] {
            assert!((normal_cdf(x) + normal_sf(x) - 1.0).abs() < 1e-15);
            let (c, s) = (t_cdf(x, 12.8).unwrap(), t_sf(x, 12.8).unwrap());
            assert!((c + s - 1.0).abs() < 1e-15);
        }
        for &f in &[0.0, 0.5, 2.866, 30.0] {
            let (c, s) = (f_cdf(f, 3.0, 36.0).unwrap(), f_sf(f, 3.0, 36.0).unwrap());
            assert!((c + s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn deep_normal_tail_is_not_zero() {
        let s = normal_sf(10.0);
        assert!(s > 7.6e-24 && s < 7.7e-24, "{s}");
    }

    #[test]
    fn domain_errors() {
        assert!(t_cdf(1.0, 0.0).is_err());
        assert!(t_cdf(f64::NAN, 3.0).is_err());
        assert!(f_cdf(-1.0, 3.0, 36.0).is_err());
        assert!(f_cdf(1.0, 3.0, -1.0).is_err());
        assert!(quantile(Distribution::Normal, 0.0).is_err());
        assert!(quantile(Distribution::Normal, 1.0).is_err());
        assert!(quantile(Distribution::F { df1: 0.0, df2: 2.0 }, 0.5).is_err());
    }

    #[test]
    fn f_critical_value_for_three_and_thirty_six() {
        let crit = quantile(Distribution::F { df1: 3.0, df2: 36.0 }, 0.95).unwrap();
        assert!((crit - 2.866).abs() < 1e-3, "{crit}");
        assert_eq!(format!("{crit:.2}"), "2.87");
        assert!((f_cdf(2.866, 3.0, 36.0).unwrap() - 0.95).abs() < 1e-4);
    }

    #[test]
    fn t_converges_to_normal() {
        let mut x = -5.0;
        while x <= 5.0 {
            assert!((t_cdf(x, 1e6).unwrap() - normal_cdf(x)).abs() <= 1e-5);
            x += 0.25;
        }
    }

    #[test]
    fn infinite_arguments() {
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(t_cdf(f64::INFINITY, 3.0).unwrap(), 1.0);
        assert_eq!(t_cdf(f64::NEG_INFINITY, 3.0).unwrap(), 0.0);
        assert_eq!(f_cdf(f64::INFINITY, 3.0, 4.0).unwrap(), 1.0);
    }
}
