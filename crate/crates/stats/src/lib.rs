//! Statistical kernels for demographic-differential testing.
//!
//! Everything here is self-contained: the special functions back the normal,
//! Student-t and F distributions (with fractional degrees of freedom), and the
//! distributions back the three hypothesis tests used by the audit pipelines:
//!
//! - [`two_prop_z`]: pooled two-proportion z-test on point estimates,
//! - [`welch_t`]: Welch's unequal-variance t-test on bootstrap summaries,
//! - [`anova_f`] / [`anova_f_from_summaries`]: balanced one-way ANOVA.

mod dist;
mod error;
mod hypothesis;
pub mod serde_float;
mod special;

pub use dist::{
    f_cdf, f_sf, normal_cdf, normal_sf, quantile, t_cdf, t_sf, Distribution,
};
pub use error::StatError;
pub use hypothesis::{
    anova_f, anova_f_from_summaries, two_prop_z, welch_decision, welch_t, Df, GrandMean, GroupSummary,
    ProportionSummary, RateUnit, TestKind, TestResult,
};
pub use special::{ln_beta, ln_gamma, reg_incomplete_beta, reg_lower_gamma, reg_upper_gamma};

pub type Result<T> = std::result::Result<T, StatError>;

/// Arithmetic mean and sample standard deviation (`n - 1` denominator).
///
/// Returns `None` for fewer than two values.
pub fn mean_and_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}
