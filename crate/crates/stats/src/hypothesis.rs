//! Two-proportion z, Welch t and one-way ANOVA tests with their decision rules.
//!
//! Every test reports both a p-value and the critical value it was compared
//! against. `reject` is defined as `p_value < alpha`; the critical-value
//! comparison gives the same answer away from floating-point ties.

use serde::{Deserialize, Serialize};

use crate::dist::{f_sf, normal_sf, quantile, t_sf, Distribution};
use crate::{Result, StatError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateUnit {
    Fraction,
    Percent,
}

impl RateUnit {
    pub fn name(self) -> &'static str {
        match self {
            RateUnit::Fraction => "fraction",
            RateUnit::Percent => "percent",
        }
    }

    /// Factor converting a fraction into this unit.
    pub fn scale(self) -> f64 {
        match self {
            RateUnit::Fraction => 1.0,
            RateUnit::Percent => 100.0,
        }
    }
}

/// Mean, standard deviation and replicate count of a rate over bootstrap replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub mean: f64,
    pub std: f64,
    pub m: usize,
    pub unit: RateUnit,
}

impl GroupSummary {
    pub fn new(mean: f64, std: f64, m: usize, unit: RateUnit) -> Result<Self> {
        if !mean.is_finite() {
            return Err(StatError::Domain(format!("summary mean must be finite, got {mean}")));
        }
        if !(std >= 0.0 && std.is_finite()) {
            return Err(StatError::Domain(format!("summary std must be >= 0, got {std}")));
        }
        if m < 2 {
            return Err(StatError::Domain(format!("need at least 2 replicates, got {m}")));
        }
        Ok(Self { mean, std, m, unit })
    }

    pub fn from_replicates(values: &[f64], unit: RateUnit) -> Result<Self> {
        let (mean, std) = crate::mean_and_std(values).ok_or_else(|| {
            StatError::Domain(format!("need at least 2 replicates, got {}", values.len()))
        })?;
        Self::new(mean, std, values.len(), unit)
    }

    fn variance_of_mean(&self) -> f64 {
        self.std * self.std / self.m as f64
    }
}

/// Point estimate of a Bernoulli rate over `n` trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionSummary {
    pub p_hat: f64,
    pub n: u64,
}

impl ProportionSummary {
    pub fn new(p_hat: f64, n: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_hat) {
            return Err(StatError::Domain(format!("proportion must lie in [0,1], got {p_hat}")));
        }
        if n == 0 {
            return Err(StatError::Domain("proportion needs at least one trial".into()));
        }
        Ok(Self { p_hat, n })
    }

    pub fn from_counts(successes: u64, n: u64) -> Result<Self> {
        if successes > n {
            return Err(StatError::Domain(format!("{successes} successes out of {n} trials")));
        }
        Self::new(successes as f64 / n.max(1) as f64, n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    TwoPropZ,
    WelchT,
    AnovaF,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Df {
    // untagged: most specific shape first
    Two { nu1: f64, nu2: f64 },
    One { nu: f64 },
    None {},
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrandMean {
    /// Unweighted mean of the group means.
    Unweighted,
    /// Externally supplied overall rate (e.g. a size-weighted dataset rate).
    Supplied(#[serde(with = "crate::serde_float")] f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    #[serde(with = "crate::serde_float")]
    pub statistic: f64,
    pub df: Df,
    pub p_value: f64,
    pub alpha: f64,
    #[serde(with = "crate::serde_float")]
    pub critical_value: f64,
    pub reject: bool,
    /// Set when the statistic is degenerate (zero variance) and the decision
    /// was made by convention rather than from a finite statistic.
    #[serde(default)]
    pub degenerate: bool,
}

impl TestResult {
    /// Decision for two samples that are identical by construction: statistic
    /// 0, p-value 1, retain.
    pub fn identical(kind: TestKind, df: Df, alpha: f64, critical_value: f64) -> Self {
        Self {
            kind,
            statistic: 0.0,
            df,
            p_value: 1.0,
            alpha,
            critical_value,
            reject: false,
            degenerate: true,
        }
    }

    /// Decision for separated samples with no within-sample variability.
    pub fn separated(kind: TestKind, df: Df, alpha: f64, critical_value: f64, sign: f64) -> Self {
        Self {
            kind,
            statistic: f64::INFINITY.copysign(sign),
            df,
            p_value: 0.0,
            alpha,
            critical_value,
            reject: true,
            degenerate: true,
        }
    }

    /// Decision derived from the critical value instead of the p-value.
    pub fn reject_by_critical_value(&self) -> bool {
        match self.kind {
            TestKind::AnovaF => self.statistic > self.critical_value,
            _ => self.statistic.abs() > self.critical_value,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(StatError::Domain(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

/// Pooled two-proportion z-test of H0: p0 = p1 against a two-sided alternative.
pub fn two_prop_z(g0: ProportionSummary, g1: ProportionSummary, alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    let (n0, n1) = (g0.n as f64, g1.n as f64);
    let pooled = (n0 * g0.p_hat + n1 * g1.p_hat) / (n0 + n1);
    if pooled <= 0.0 || pooled >= 1.0 {
        return Err(StatError::DegeneratePooledProportion { pooled });
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n0 + 1.0 / n1)).sqrt();
    let z = (g0.p_hat - g1.p_hat) / se;
    let p_value = (2.0 * normal_sf(z.abs())).min(1.0);
    let critical_value = quantile(Distribution::Normal, 1.0 - alpha / 2.0)?;
    Ok(TestResult {
        kind: TestKind::TwoPropZ,
        statistic: z,
        df: Df::None {},
        p_value,
        alpha,
        critical_value,
        reject: p_value < alpha,
        degenerate: false,
    })
}

/// Welch's unequal-variance t-test on two bootstrap summaries.
///
/// The degrees of freedom come from the Welch–Satterthwaite formula and are
/// used unrounded in the t distribution.
pub fn welch_t(g0: GroupSummary, g1: GroupSummary, alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    if g0.unit != g1.unit {
        return Err(StatError::UnitMismatch(g0.unit.name(), g1.unit.name()));
    }
    let (v0, v1) = (g0.variance_of_mean(), g1.variance_of_mean());
    let total = v0 + v1;
    if total == 0.0 {
        return Err(StatError::NoReplicateVariance);
    }
    let statistic = (g0.mean - g1.mean) / total.sqrt();
    let nu = total * total
        / (v0 * v0 / (g0.m as f64 - 1.0) + v1 * v1 / (g1.m as f64 - 1.0));
    welch_decision(statistic, nu, alpha)
}

/// Two-sided decision for a Welch statistic with (possibly fractional)
/// degrees of freedom `nu`.
pub fn welch_decision(statistic: f64, nu: f64, alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    if !statistic.is_finite() {
        return Err(StatError::Domain(format!("statistic must be finite, got {statistic}")));
    }
    let p_value = (2.0 * t_sf(statistic.abs(), nu)?).min(1.0);
    let critical_value = quantile(Distribution::StudentT { df: nu }, 1.0 - alpha / 2.0)?;
    Ok(TestResult {
        kind: TestKind::WelchT,
        statistic,
        df: Df::One { nu },
        p_value,
        alpha,
        critical_value,
        reject: p_value < alpha,
        degenerate: false,
    })
}

/// Balanced one-way ANOVA on raw replicate lists (one list per group).
pub fn anova_f(groups: &[Vec<f64>], alpha: f64, grand: GrandMean) -> Result<TestResult> {
    check_alpha(alpha)?;
    if groups.len() < 2 {
        return Err(StatError::Domain(format!("ANOVA needs k >= 2 groups, got {}", groups.len())));
    }
    let m = groups[0].len();
    if groups.iter().any(|g| g.len() != m) {
        return Err(StatError::BalancedDesignRequired(groups.iter().map(Vec::len).collect()));
    }
    if m < 2 {
        return Err(StatError::Domain(format!("ANOVA needs m >= 2 replicates, got {m}")));
    }
    let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / m as f64).collect();
    let within_ss: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, mean)| g.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>())
        .sum();
    anova_finish(&means, within_ss, m, alpha, grand)
}

/// Balanced one-way ANOVA from per-group (mean, std, m) summaries; the
/// within-group sum of squares is reconstructed as `Σ (m - 1) s_j²`.
pub fn anova_f_from_summaries(
    groups: &[GroupSummary],
    alpha: f64,
    grand: GrandMean,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    if groups.len() < 2 {
        return Err(StatError::Domain(format!("ANOVA needs k >= 2 groups, got {}", groups.len())));
    }
    let m = groups[0].m;
    if groups.iter().any(|g| g.m != m) {
        return Err(StatError::BalancedDesignRequired(groups.iter().map(|g| g.m).collect()));
    }
    if let Some(other) = groups.iter().find(|g| g.unit != groups[0].unit) {
        return Err(StatError::UnitMismatch(groups[0].unit.name(), other.unit.name()));
    }
    let means: Vec<f64> = groups.iter().map(|g| g.mean).collect();
    let within_ss: f64 = groups.iter().map(|g| (m as f64 - 1.0) * g.std * g.std).sum();
    anova_finish(&means, within_ss, m, alpha, grand)
}

fn anova_finish(
    means: &[f64],
    within_ss: f64,
    m: usize,
    alpha: f64,
    grand: GrandMean,
) -> Result<TestResult> {
    let k = means.len() as f64;
    let m_f = m as f64;
    let grand = match grand {
        GrandMean::Unweighted => means.iter().sum::<f64>() / k,
        GrandMean::Supplied(v) if v.is_finite() => v,
        GrandMean::Supplied(v) => {
            return Err(StatError::Domain(format!("supplied grand mean must be finite, got {v}")))
        }
    };
    let (nu1, nu2) = (k - 1.0, k * (m_f - 1.0));
    let df = Df::Two { nu1, nu2 };
    let between = m_f / nu1 * means.iter().map(|p| (p - grand) * (p - grand)).sum::<f64>();
    let within = within_ss / nu2;
    let critical_value = quantile(Distribution::F { df1: nu1, df2: nu2 }, 1.0 - alpha)?;

    if within == 0.0 {
        return Ok(if between == 0.0 {
            TestResult::identical(TestKind::AnovaF, df, alpha, critical_value)
        } else {
            TestResult::separated(TestKind::AnovaF, df, alpha, critical_value, 1.0)
        });
    }
    let statistic = between / within;
    let p_value = f_sf(statistic, nu1, nu2)?;
    Ok(TestResult {
        kind: TestKind::AnovaF,
        statistic,
        df,
        p_value,
        alpha,
        critical_value,
        reject: p_value < alpha,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pct(mean: f64, std: f64) -> GroupSummary {
        GroupSummary::new(mean, std, 10, RateUnit::Percent).unwrap()
    }

    #[test]
    fn z_identical_proportions() {
        let g = ProportionSummary::new(0.9, 500).unwrap();
        let r = two_prop_z(g, g, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject);
    }

    #[test]
    fn z_large_sample_value() {
        // Direct evaluation: pooled 0.9935, se = sqrt(0.9935*0.0065*2e-4)
        let g0 = ProportionSummary::new(0.995, 10_000).unwrap();
        let g1 = ProportionSummary::new(0.992, 10_000).unwrap();
        let r = two_prop_z(g0, g1, 0.05).unwrap();
        let expected = 0.003 / (0.9935f64 * 0.0065 * 2e-4).sqrt();
        assert!((r.statistic - expected).abs() < 1e-12);
        assert!((r.statistic - 2.640).abs() < 5e-4, "{}", r.statistic);
        assert!(r.reject);
        let swapped = two_prop_z(g1, g0, 0.05).unwrap();
        assert_eq!(swapped.statistic, -r.statistic);
        assert_eq!(swapped.p_value, r.p_value);
    }

    #[test]
    fn z_degenerate_pool() {
        let one = ProportionSummary::from_counts(10, 10).unwrap();
        let err = two_prop_z(one, one, 0.05).unwrap_err();
        assert!(matches!(err, StatError::DegeneratePooledProportion { .. }));
        let zero = ProportionSummary::from_counts(0, 10).unwrap();
        assert!(two_prop_z(zero, zero, 0.05).is_err());
    }

    #[test]
    fn welch_table_rows() {
        let r = welch_t(pct(99.46, 0.08), pct(99.68, 0.07), 0.05).unwrap();
        assert!((r.statistic.abs() - 6.54).abs() < 0.01);
        let Df::One { nu } = r.df else { panic!() };
        assert!((nu - 17.69).abs() < 0.01);
        assert!(r.reject);

        let r = welch_t(pct(99.53, 0.17), pct(99.46, 0.08), 0.05).unwrap();
        assert!((r.statistic.abs() - 1.18).abs() < 0.01);
        let Df::One { nu } = r.df else { panic!() };
        assert!((nu - 12.80).abs() < 0.01);
        assert!(!r.reject);
    }

    #[test]
    fn welch_equal_means_retain() {
        let r = welch_t(pct(50.0, 1.0), pct(50.0, 3.0), 0.999).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
    }

    #[test]
    fn welch_errors() {
        assert_eq!(
            welch_t(pct(1.0, 0.0), pct(2.0, 0.0), 0.05).unwrap_err(),
            StatError::NoReplicateVariance
        );
        let frac = GroupSummary::new(0.5, 0.1, 10, RateUnit::Fraction).unwrap();
        assert!(matches!(
            welch_t(frac, pct(50.0, 1.0), 0.05).unwrap_err(),
            StatError::UnitMismatch(..)
        ));
        assert!(GroupSummary::new(1.0, 0.1, 1, RateUnit::Fraction).is_err());
        assert!(GroupSummary::new(1.0, -0.1, 3, RateUnit::Fraction).is_err());
        assert!(welch_t(pct(1.0, 1.0), pct(2.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn anova_two_groups_matches_pooled_t_square() {
        let r = anova_f(&[vec![1.0, 2.0, 3.0], vec![3.0, 4.0, 5.0]], 0.05, GrandMean::Unweighted)
            .unwrap();
        assert!((r.statistic - 6.0).abs() < 1e-12);
        assert_eq!(r.df, Df::Two { nu1: 1.0, nu2: 4.0 });
        // pooled t = (4 - 2) / sqrt(1 * (1/3 + 1/3)) = 2.449...
        let t: f64 = 2.0 / (2.0f64 / 3.0).sqrt();
        assert!((t * t - r.statistic).abs() < 1e-12);
    }

    #[test]
    fn anova_identical_groups() {
        let g = vec![0.9, 0.95, 0.92];
        let r = anova_f(&[g.clone(), g.clone(), g], 0.05, GrandMean::Unweighted).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!(!r.reject);
    }

    #[test]
    fn anova_balanced_and_degenerate() {
        let err = anova_f(&[vec![1.0, 2.0], vec![1.0, 2.0, 3.0]], 0.05, GrandMean::Unweighted);
        assert!(matches!(err.unwrap_err(), StatError::BalancedDesignRequired(_)));

        let r = anova_f(&[vec![1.0, 1.0], vec![2.0, 2.0]], 0.05, GrandMean::Unweighted).unwrap();
        assert!(r.reject && r.degenerate);
        assert_eq!(r.p_value, 0.0);

        let r = anova_f(&[vec![1.0, 1.0], vec![1.0, 1.0]], 0.05, GrandMean::Unweighted).unwrap();
        assert!(!r.reject && r.degenerate);
    }

    #[test]
    fn anova_summaries_agree_with_raw() {
        let a = vec![0.91, 0.93, 0.90, 0.95];
        let b = vec![0.88, 0.90, 0.87, 0.86];
        let c = vec![0.92, 0.91, 0.95, 0.94];
        let raw = anova_f(&[a.clone(), b.clone(), c.clone()], 0.05, GrandMean::Unweighted).unwrap();
        let sums: Vec<_> = [a, b, c]
            .iter()
            .map(|g| GroupSummary::from_replicates(g, RateUnit::Fraction).unwrap())
            .collect();
        let s = anova_f_from_summaries(&sums, 0.05, GrandMean::Unweighted).unwrap();
        assert!((raw.statistic - s.statistic).abs() < 1e-9 * raw.statistic);
        assert!((raw.p_value - s.p_value).abs() < 1e-12);

        let supplied = anova_f_from_summaries(&sums, 0.05, GrandMean::Supplied(0.9)).unwrap();
        assert!(supplied.statistic != s.statistic);
    }

    #[test]
    fn result_serializes() {
        let r = anova_f(&[vec![1.0, 1.0], vec![2.0, 2.0]], 0.05, GrandMean::Unweighted).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: TestResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let z = two_prop_z(
            ProportionSummary::new(0.5, 10).unwrap(),
            ProportionSummary::new(0.6, 10).unwrap(),
            0.05,
        )
        .unwrap();
        let back: TestResult = serde_json::from_str(&serde_json::to_string(&z).unwrap()).unwrap();
        assert_eq!(back, z);
    }
}
