//! Minimal-flip sensitivity, genuine-score outlier flags and per-group
//! quality comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use fairprint_stats::{
    quantile, two_prop_z, welch_t, Df, Distribution, GroupSummary, ProportionSummary, RateUnit, StatError, TestKind,
    TestResult,
};

use crate::domain::{ComparisonRecord, DemographicGroup, GroupSelector, ScoreSet};
use crate::error::{Error, Result};
use crate::resample::{bootstrap_group_tmr, BootstrapConfig};
use crate::rng::Stream;

/// Welch test that settles zero-variance inputs by convention: equal means
/// retain, different means reject. The degrees of freedom are then undefined
/// and the reported critical value is the normal one.
pub fn welch_or_convention(g0: GroupSummary, g1: GroupSummary, alpha: f64) -> Result<TestResult> {
    match welch_t(g0, g1, alpha) {
        Err(StatError::NoReplicateVariance) => {
            let crit = quantile(Distribution::Normal, 1.0 - alpha / 2.0)?;
            Ok(if g0.mean == g1.mean {
                TestResult::identical(TestKind::WelchT, Df::None {}, alpha, crit)
            } else {
                TestResult::separated(TestKind::WelchT, Df::None {}, alpha, crit, g0.mean - g1.mean)
            })
        }
        other => Ok(other?),
    }
}

/// Two-proportion z-test treating a pooled proportion of 0 or 1 (both
/// groups all-fail or all-pass) as identical groups.
pub fn two_prop_or_convention(g0: ProportionSummary, g1: ProportionSummary, alpha: f64) -> Result<TestResult> {
    match two_prop_z(g0, g1, alpha) {
        Err(StatError::DegeneratePooledProportion { .. }) => {
            let crit = quantile(Distribution::Normal, 1.0 - alpha / 2.0)?;
            Ok(TestResult::identical(TestKind::TwoPropZ, Df::None {}, alpha, crit))
        }
        other => Ok(other?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipMode {
    /// Two-proportion z-test on point TMRs.
    PointZ,
    /// Welch test on bootstrap TMRs with a frozen seed.
    BootstrapWelch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipStatus {
    AlreadyNonSignificant,
    Erased,
    /// Still significant after flipping every below-threshold genuine score.
    NotErasable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipSearch {
    Binary,
    /// Binary search met a non-monotone decision sequence.
    LinearFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub pair: (GroupSelector, GroupSelector),
    pub mode: FlipMode,
    pub status: FlipStatus,
    /// Group whose scores are raised: the one with the lower TMR.
    pub flipped_group: GroupSelector,
    /// `None` when not erasable.
    pub flips_needed: Option<usize>,
    pub flipped_fraction: Option<f64>,
    /// Below-threshold genuine scores of the flipped group.
    pub candidates: usize,
    pub n_genuine_flipped_group: usize,
    pub test_before: TestResult,
    pub test_after: TestResult,
    pub search: FlipSearch,
    pub evaluations: usize,
}

/// Exhaustive verification below this many flips; sparse checks above.
const FULL_VERIFY_LIMIT: usize = 64;
const SPARSE_CHECKS: usize = 16;

/// Smallest number of below-threshold genuine scores of the lower-TMR group
/// that must be raised to the threshold for the pairwise test to stop
/// rejecting.
///
/// The decision as a function of the flip count is searched by bisection,
/// then checked below the answer (every count when the answer is small, a
/// spread of counts otherwise). A violation switches to a linear scan.
pub fn minimal_flips(
    scores: &ScoreSet,
    pair: &(GroupSelector, GroupSelector),
    threshold: f64,
    alpha: f64,
    mode: FlipMode,
    config: &BootstrapConfig,
) -> Result<FlipReport> {
    let ctx = || format!("flip analysis {}:{}", pair.0, pair.1);
    let members = |sel: &GroupSelector| -> Vec<usize> {
        (0..scores.len())
            .filter(|&i| {
                let g = scores.probe_group(i);
                scores.comparisons()[i].mated && g.is_canonical() && sel.matches(g)
            })
            .collect()
    };
    let genuine = [members(&pair.0), members(&pair.1)];
    for (sel, m) in [&pair.0, &pair.1].iter().zip(&genuine) {
        if m.is_empty() {
            return Err(Error::Data(format!("group {sel} has no genuine comparisons")).context(ctx()));
        }
    }
    let accepted = |idx: &[usize]| idx.iter().filter(|&&i| scores.comparisons()[i].score >= threshold).count();
    let point = [accepted(&genuine[0]), accepted(&genuine[1])];
    let tmr = |g: usize| point[g] as f64 / genuine[g].len() as f64;

    let run = |lower: usize, candidates: &[usize], k: usize| -> Result<TestResult> {
        match mode {
            FlipMode::PointZ => {
                let mut hits = point;
                hits[lower] += k;
                two_prop_or_convention(
                    ProportionSummary::from_counts(hits[0] as u64, genuine[0].len() as u64)?,
                    ProportionSummary::from_counts(hits[1] as u64, genuine[1].len() as u64)?,
                    alpha,
                )
            }
            FlipMode::BootstrapWelch => {
                let updates: Vec<(usize, f64)> = candidates[..k].iter().map(|&i| (i, threshold)).collect();
                let flipped = scores.with_scores(&updates)?;
                let est = bootstrap_group_tmr(
                    &flipped,
                    threshold,
                    &[Some(pair.0.clone()), Some(pair.1.clone())],
                    config,
                )?;
                welch_or_convention(
                    est[0].summary(RateUnit::Fraction)?,
                    est[1].summary(RateUnit::Fraction)?,
                    alpha,
                )
            }
        }
    };

    let before_any = run(0, &[], 0).map_err(|e| e.context(ctx()))?;
    let lower = match mode {
        FlipMode::PointZ => usize::from(tmr(1) < tmr(0)),
        FlipMode::BootstrapWelch => usize::from(before_any.statistic > 0.0),
    };
    let mut candidates: Vec<usize> =
        genuine[lower].iter().copied().filter(|&i| scores.comparisons()[i].score < threshold).collect();
    candidates.sort_by(|&a, &b| scores.comparisons()[a].score.total_cmp(&scores.comparisons()[b].score).then(a.cmp(&b)));
    let n_candidates = candidates.len();

    // Raising the lower group moves the statistic towards, then past, zero:
    // the decision rejects, stops rejecting, and may reject again in the
    // opposite direction. The search looks for the first count at which the
    // original-direction rejection no longer holds.
    let direction = before_any.statistic.signum();
    let mut evaluations = 1;
    let mut cache: BTreeMap<usize, TestResult> = BTreeMap::new();
    cache.insert(0, before_any.clone());
    let mut test_at = |k: usize| -> Result<TestResult> {
        if let Some(t) = cache.get(&k) {
            return Ok(t.clone());
        }
        let t = run(lower, &candidates, k).map_err(|e| e.context(ctx()))?;
        evaluations += 1;
        cache.insert(k, t.clone());
        Ok(t)
    };
    let holds = |t: &TestResult| t.reject && t.statistic.signum() == direction;

    let report = |status, k: Option<usize>, after: TestResult, search, evaluations| FlipReport {
        pair: pair.clone(),
        mode,
        status,
        flipped_group: if lower == 0 { pair.0.clone() } else { pair.1.clone() },
        flips_needed: k,
        flipped_fraction: k.map(|k| k as f64 / genuine[lower].len() as f64),
        candidates: n_candidates,
        n_genuine_flipped_group: genuine[lower].len(),
        test_before: before_any.clone(),
        test_after: after,
        search,
        evaluations,
    };

    if !before_any.reject {
        return Ok(report(FlipStatus::AlreadyNonSignificant, Some(0), before_any.clone(), FlipSearch::Binary, 1));
    }
    let full = test_at(n_candidates)?;
    if holds(&full) {
        return Ok(report(FlipStatus::NotErasable, None, full, FlipSearch::Binary, evaluations));
    }

    // holds(lo) is true, holds(hi) is false
    let (mut lo, mut hi) = (0, n_candidates);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(&test_at(mid)?) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let checks: Vec<usize> = if hi <= FULL_VERIFY_LIMIT {
        (0..hi).collect()
    } else {
        (0..SPARSE_CHECKS).map(|i| i * hi / SPARSE_CHECKS).chain([hi - 1]).collect()
    };
    let mut search = FlipSearch::Binary;
    let mut answer = hi;
    for k in checks {
        if !holds(&test_at(k)?) {
            search = FlipSearch::LinearFallback;
            answer = n_candidates;
            for k in 0..=n_candidates {
                if !test_at(k)?.reject {
                    answer = k;
                    break;
                }
            }
            break;
        }
    }
    let after = test_at(answer)?;
    if after.reject {
        // jumped straight from one significant direction to the other
        return Ok(report(FlipStatus::NotErasable, None, after, search, evaluations));
    }
    Ok(report(FlipStatus::Erased, Some(answer), after, search, evaluations))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierFlag {
    pub comparison: ComparisonRecord,
    pub group: DemographicGroup,
    /// `threshold - score`.
    pub margin: f64,
    pub probe_quality: Option<f64>,
    pub gallery_quality: Option<f64>,
}

/// Genuine comparisons scoring below `threshold`, lowest score first.
pub fn flag_outliers(
    scores: &ScoreSet,
    threshold: f64,
    quality: Option<&BTreeMap<String, f64>>,
) -> Result<Vec<OutlierFlag>> {
    if scores.genuine_count() == 0 {
        return Err(Error::Data("outlier flagging needs at least one genuine comparison".into()));
    }
    let mut flags: Vec<OutlierFlag> = scores
        .comparisons()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.mated && c.score < threshold)
        .map(|(i, c)| OutlierFlag {
            comparison: c.clone(),
            group: scores.probe_group(i).clone(),
            margin: threshold - c.score,
            probe_quality: quality.and_then(|q| q.get(&c.probe_sample).copied()),
            gallery_quality: quality.and_then(|q| q.get(&c.gallery_sample).copied()),
        })
        .collect();
    flags.sort_by(|a, b| a.comparison.score.total_cmp(&b.comparison.score));
    Ok(flags)
}

pub const QUALITY_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub group: GroupSelector,
    pub n_samples: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    /// Counts over equal-width bins of [0, 100]; the last bin includes 100.
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityPairTest {
    pub pair: (GroupSelector, GroupSelector),
    pub test: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityComparison {
    pub summaries: Vec<QualitySummary>,
    pub tests: Vec<QualityPairTest>,
    /// Per-group sample count after equal sampling, if applied.
    pub equal_sample_size: Option<usize>,
}

/// Maps every sample id seen in `scores` to its subject's group.
pub fn sample_groups(scores: &ScoreSet) -> BTreeMap<String, DemographicGroup> {
    let mut out = BTreeMap::new();
    for c in scores.comparisons() {
        for (sample, subject) in [(&c.probe_sample, &c.probe_subject), (&c.gallery_sample, &c.gallery_subject)] {
            if let Some(g) = scores.subjects().group_of(subject) {
                out.entry(sample.clone()).or_insert_with(|| g.clone());
            }
        }
    }
    out
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn histogram(values: &[f64]) -> Vec<u64> {
    let mut h = vec![0u64; QUALITY_BINS];
    let width = 100.0 / QUALITY_BINS as f64;
    for &v in values {
        let bin = ((v / width).floor() as usize).min(QUALITY_BINS - 1);
        h[bin] += 1;
    }
    h
}

/// Per-group quality summaries and pairwise Welch tests on mean quality,
/// with samples as the unit. `equal_sampling` draws the same number of
/// samples from every group using the given seed.
pub fn quality_compare(
    quality: &BTreeMap<String, f64>,
    sample_groups: &BTreeMap<String, DemographicGroup>,
    groups: &[GroupSelector],
    pairs: &[(GroupSelector, GroupSelector)],
    alpha: f64,
    equal_sampling: Option<u64>,
) -> Result<QualityComparison> {
    for (sample, &q) in quality {
        if !(0.0..=100.0).contains(&q) {
            return Err(Error::Data(format!("quality {q} of sample {sample:?} outside [0, 100]")));
        }
    }
    let mut values: BTreeMap<GroupSelector, Vec<(String, f64)>> = BTreeMap::new();
    for sel in groups.iter().chain(pairs.iter().flat_map(|(a, b)| [a, b])) {
        let v: Vec<(String, f64)> = quality
            .iter()
            .filter(|(s, _)| sample_groups.get(*s).is_some_and(|g| g.is_canonical() && sel.matches(g)))
            .map(|(s, &q)| (s.clone(), q))
            .collect();
        values.insert(sel.clone(), v);
    }
    let equal_sample_size = match equal_sampling {
        None => None,
        Some(seed) => {
            let n = values.values().map(Vec::len).min().unwrap_or(0);
            let root = Stream::new(seed);
            for (sel, v) in values.iter_mut() {
                root.derive_str(&sel.to_string()).shuffle(v);
                v.truncate(n);
                v.sort_by(|a, b| a.0.cmp(&b.0));
            }
            Some(n)
        }
    };

    let summarize = |sel: &GroupSelector| -> Result<(QualitySummary, Vec<f64>)> {
        let mut v: Vec<f64> = values[sel].iter().map(|(_, q)| *q).collect();
        if v.len() < 2 {
            return Err(Error::Data(format!("group {sel} has {} quality samples, need 2", v.len())));
        }
        let (mean, std) = fairprint_stats::mean_and_std(&v).expect("at least two values");
        v.sort_by(f64::total_cmp);
        let s = QualitySummary {
            group: sel.clone(),
            n_samples: v.len(),
            mean,
            median: median(&v),
            std,
            histogram: histogram(&v),
        };
        Ok((s, v))
    };

    let summaries = groups.iter().map(|g| summarize(g).map(|s| s.0)).collect::<Result<Vec<_>>>()?;
    let tests = pairs
        .iter()
        .map(|(a, b)| {
            let (sa, _) = summarize(a)?;
            let (sb, _) = summarize(b)?;
            let ga = GroupSummary::new(sa.mean, sa.std, sa.n_samples, RateUnit::Fraction)?;
            let gb = GroupSummary::new(sb.mean, sb.std, sb.n_samples, RateUnit::Fraction)?;
            Ok(QualityPairTest { pair: (a.clone(), b.clone()), test: welch_or_convention(ga, gb, alpha)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QualityComparison { summaries, tests, equal_sample_size })
}
