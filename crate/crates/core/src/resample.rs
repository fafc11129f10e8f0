//! Deterministic bootstrap over subjects or comparisons.
//!
//! Replicate `r` draws its units from `Stream::new(seed).derive(r)`, so each
//! replicate can be computed independently and in any order; results are
//! collected in replicate order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fairprint_stats::{GroupSummary, RateUnit};

use crate::domain::{GroupSelector, ScoreSet};
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleUnit {
    /// Draw probe subjects; every comparison of a drawn subject comes along.
    Subject,
    /// Draw comparisons independently.
    Comparison,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub m: usize,
    pub seed: u64,
    pub unit: ResampleUnit,
}

pub const DEFAULT_REPLICATES: usize = 10;
pub const DEFAULT_SEED: u64 = 1;

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { m: DEFAULT_REPLICATES, seed: DEFAULT_SEED, unit: ResampleUnit::Subject }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config(format!("bootstrap needs m >= 2 replicates, got {}", self.m)));
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.m <= DEFAULT_REPLICATES {
            out.push(format!(
                "bootstrap uses m = {} replicates; standard deviations from so few replicates are coarse",
                self.m
            ));
        }
        out
    }

    fn stream(&self, replicate: usize) -> Stream {
        Stream::new(self.seed).derive(replicate as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Tmr,
    Fpir,
    Fnir,
    Tpir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    /// `None` when the estimate covers a whole, unpartitioned set.
    pub group: Option<GroupSelector>,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub replicates: Vec<f64>,
    pub config: BootstrapConfig,
}

impl BootstrapEstimate {
    pub fn from_replicates(
        group: Option<GroupSelector>,
        metric: Metric,
        replicates: Vec<f64>,
        config: BootstrapConfig,
    ) -> Result<Self> {
        let (mean, std) = fairprint_stats::mean_and_std(&replicates)
            .ok_or_else(|| Error::Config(format!("need at least 2 replicates, got {}", replicates.len())))?;
        Ok(Self { group, metric, mean, std, replicates, config })
    }

    /// Summary in the requested unit (replicates are stored as fractions).
    pub fn summary(&self, unit: RateUnit) -> Result<GroupSummary> {
        let s = unit.scale();
        Ok(GroupSummary::new(self.mean * s, self.std * s, self.replicates.len(), unit)?)
    }
}

/// Units drawn with replacement for one replicate: `n_units` indices in `0..n_units`.
pub fn draw_units(n_units: usize, config: &BootstrapConfig, replicate: usize) -> Vec<usize> {
    let mut stream = config.stream(replicate);
    (0..n_units).map(|_| stream.below(n_units)).collect()
}

/// Evaluates `statistic` on every replicate's draw, in parallel, returning
/// values in replicate order.
pub fn bootstrap_values<F>(n_units: usize, config: &BootstrapConfig, statistic: F) -> Result<Vec<f64>>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    config.validate()?;
    if n_units == 0 {
        return Err(Error::Data("cannot bootstrap an empty sample".into()));
    }
    (0..config.m)
        .into_par_iter()
        .map(|r| {
            let draws = draw_units(n_units, config, r);
            statistic(&draws).map_err(|e| Error::Replicate { index: r, cause: e.to_string() })
        })
        .collect()
}

/// One bootstrap replicate of `scores`.
///
/// Subject mode draws as many probe subjects as the set has and emits each
/// drawn subject's comparisons once per draw, in draw order.
pub fn resample(scores: &ScoreSet, config: &BootstrapConfig, replicate: usize) -> Result<ScoreSet> {
    if scores.is_empty() {
        return Err(Error::EmptyScoreSet);
    }
    if replicate >= config.m {
        return Err(Error::Config(format!("replicate index {replicate} outside 0..{}", config.m)));
    }
    match config.unit {
        ResampleUnit::Comparison => Ok(scores.select(draw_units(scores.len(), config, replicate))),
        ResampleUnit::Subject => {
            let units = SubjectUnits::new(scores);
            let draws = draw_units(units.len(), config, replicate);
            Ok(scores.select(draws.iter().flat_map(|&u| units.members[u].iter().copied())))
        }
    }
}

/// Comparisons grouped by distinct probe subject, ascending subject index.
struct SubjectUnits {
    members: Vec<Vec<usize>>,
}

impl SubjectUnits {
    fn new(scores: &ScoreSet) -> Self {
        let subjects = scores.probe_subjects();
        let mut members = vec![Vec::new(); subjects.len()];
        for (i, p) in scores.probe_indices().iter().enumerate() {
            let u = subjects.binary_search(p).expect("probe subject listed");
            members[u].push(i);
        }
        Self { members }
    }

    fn len(&self) -> usize {
        self.members.len()
    }
}

/// Bootstrap TMR of a single set at `threshold`.
pub fn bootstrap_estimate(
    scores: &ScoreSet,
    threshold: f64,
    metric: Metric,
    config: &BootstrapConfig,
) -> Result<BootstrapEstimate> {
    if metric != Metric::Tmr {
        return Err(Error::Config(format!(
            "{metric:?} is an identification metric; bootstrap it from search outcomes"
        )));
    }
    let sel: Option<GroupSelector> = None;
    let mut est = bootstrap_group_tmr(scores, threshold, &[sel], config)?;
    Ok(est.remove(0))
}

/// Bootstrap TMR for several groups at once.
///
/// Each replicate resamples the whole population and then reads off every
/// group's TMR, so marginal groups stay consistent with their composites.
/// `None` selects all comparisons.
pub fn bootstrap_group_tmr(
    scores: &ScoreSet,
    threshold: f64,
    groups: &[Option<GroupSelector>],
    config: &BootstrapConfig,
) -> Result<Vec<BootstrapEstimate>> {
    if scores.is_empty() {
        return Err(Error::EmptyScoreSet);
    }
    let tally = UnitTally::new(scores, threshold, groups, config.unit);
    let per_replicate: Vec<Vec<f64>> = (0..config.m)
        .into_par_iter()
        .map(|r| {
            let draws = draw_units(tally.n_units(), config, r);
            tally.rates(&draws).map_err(|cause| Error::Replicate { index: r, cause })
        })
        .collect::<Result<_>>()?;
    config.validate()?;
    groups
        .iter()
        .enumerate()
        .map(|(g, sel)| {
            let reps = per_replicate.iter().map(|row| row[g]).collect();
            BootstrapEstimate::from_replicates(sel.clone(), Metric::Tmr, reps, *config)
        })
        .collect()
}

/// Per-unit (genuine, accepted) counts for each requested group.
pub(crate) struct UnitTally {
    labels: Vec<String>,
    counts: Vec<Vec<(u32, u32)>>,
}

impl UnitTally {
    pub(crate) fn new(
        scores: &ScoreSet,
        threshold: f64,
        groups: &[Option<GroupSelector>],
        unit: ResampleUnit,
    ) -> Self {
        let labels = groups
            .iter()
            .map(|g| g.as_ref().map_or_else(|| "all".to_string(), |g| g.to_string()))
            .collect();
        let contribution = |i: usize| -> Vec<(u32, u32)> {
            let c = &scores.comparisons()[i];
            let group = scores.probe_group(i);
            groups
                .iter()
                .map(|sel| {
                    let inside = match sel {
                        None => true,
                        Some(s) => group.is_canonical() && s.matches(group),
                    };
                    if inside && c.mated {
                        (1, (c.score >= threshold) as u32)
                    } else {
                        (0, 0)
                    }
                })
                .collect()
        };
        let counts = match unit {
            ResampleUnit::Comparison => (0..scores.len()).map(contribution).collect(),
            ResampleUnit::Subject => SubjectUnits::new(scores)
                .members
                .iter()
                .map(|members| {
                    let mut acc = vec![(0u32, 0u32); groups.len()];
                    for &i in members {
                        for (a, (n, k)) in acc.iter_mut().zip(contribution(i)) {
                            a.0 += n;
                            a.1 += k;
                        }
                    }
                    acc
                })
                .collect(),
        };
        Self { labels, counts }
    }

    pub(crate) fn n_units(&self) -> usize {
        self.counts.len()
    }

    pub(crate) fn rates(&self, draws: &[usize]) -> std::result::Result<Vec<f64>, String> {
        let mut sums = vec![(0u64, 0u64); self.labels.len()];
        for &u in draws {
            for (s, &(n, k)) in sums.iter_mut().zip(&self.counts[u]) {
                s.0 += n as u64;
                s.1 += k as u64;
            }
        }
        sums.iter()
            .zip(&self.labels)
            .map(|(&(n, k), label)| {
                if n == 0 {
                    Err(format!("group {label} has no mated comparisons in this replicate"))
                } else {
                    Ok(k as f64 / n as f64)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{verification_rates, ComparisonRecord, DemographicGroup, SubjectRecord, SubjectTable};

    fn three_subjects() -> ScoreSet {
        let subjects = SubjectTable::new(
            ["s0", "s1", "s2"]
                .iter()
                .map(|s| SubjectRecord { subject_id: s.to_string(), group: DemographicGroup::new("B", "F").unwrap() })
                .collect(),
        )
        .unwrap();
        // s0: scores 10, 60 ; s1: 55 ; s2: 20, 30, 70
        let data = [("s0", 10.0), ("s0", 60.0), ("s1", 55.0), ("s2", 20.0), ("s2", 30.0), ("s2", 70.0)];
        let comps = data
            .iter()
            .enumerate()
            .map(|(i, (s, score))| ComparisonRecord::new(*s, format!("{s}-p{i}"), *s, format!("{s}-g{i}"), *score).unwrap())
            .collect();
        ScoreSet::new(subjects, comps).unwrap()
    }

    #[test]
    fn single_subject_replicates_are_identical() {
        let subjects = SubjectTable::new(vec![SubjectRecord {
            subject_id: "x".into(),
            group: DemographicGroup::new("W", "M").unwrap(),
        }])
        .unwrap();
        let comps = (0..3)
            .map(|i| ComparisonRecord::new("x", format!("p{i}"), "x", format!("g{i}"), i as f64).unwrap())
            .collect();
        let s = ScoreSet::new(subjects, comps).unwrap();
        let cfg = BootstrapConfig { m: 4, seed: 99, unit: ResampleUnit::Subject };
        for r in 0..4 {
            assert_eq!(resample(&s, &cfg, r).unwrap().comparisons(), s.comparisons());
        }
    }

    #[test]
    fn same_seed_same_replicate() {
        let s = three_subjects();
        let cfg = BootstrapConfig { m: 5, seed: 7, unit: ResampleUnit::Subject };
        let a = resample(&s, &cfg, 3).unwrap();
        let b = resample(&s, &cfg, 3).unwrap();
        assert_eq!(a.comparisons(), b.comparisons());
        let cfg = BootstrapConfig { unit: ResampleUnit::Comparison, ..cfg };
        assert_eq!(resample(&s, &cfg, 1).unwrap().comparisons(), resample(&s, &cfg, 1).unwrap().comparisons());
    }

    #[test]
    fn errors() {
        let empty = ScoreSet::new(SubjectTable::default(), vec![]).unwrap();
        assert!(resample(&empty, &BootstrapConfig::default(), 0).is_err());
        let s = three_subjects();
        assert!(resample(&s, &BootstrapConfig::default(), 10).is_err());
        assert!(bootstrap_estimate(&s, 1.0, Metric::Fpir, &BootstrapConfig::default()).is_err());
        let bad = BootstrapConfig { m: 1, ..Default::default() };
        assert!(bootstrap_estimate(&s, 1.0, Metric::Tmr, &bad).is_err());
    }

    #[test]
    fn tally_matches_materialised_replicates() {
        let s = three_subjects();
        for unit in [ResampleUnit::Subject, ResampleUnit::Comparison] {
            let cfg = BootstrapConfig { m: 8, seed: 3, unit };
            let est = bootstrap_estimate(&s, 48.0, Metric::Tmr, &cfg).unwrap();
            for r in 0..cfg.m {
                let rep = resample(&s, &cfg, r).unwrap();
                let tmr = verification_rates(&rep, 48.0).unwrap().tmr.value().unwrap();
                assert_eq!(est.replicates[r], tmr, "unit {unit:?} replicate {r}");
            }
        }
    }

    #[test]
    fn saturated_metric_has_zero_spread() {
        let s = three_subjects();
        let est = bootstrap_estimate(&s, 0.0, Metric::Tmr, &BootstrapConfig::default()).unwrap();
        assert!(est.replicates.iter().all(|&v| v == 1.0));
        assert_eq!(est.std, 0.0);
        assert_eq!(est.mean, 1.0);
    }

    #[test]
    fn mean_is_bracketed_by_replicates() {
        let s = three_subjects();
        for m in [2, 5, 20, 80] {
            let est = bootstrap_estimate(&s, 48.0, Metric::Tmr, &BootstrapConfig { m, seed: 11, unit: ResampleUnit::Subject })
                .unwrap();
            let lo = est.replicates.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = est.replicates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo <= est.mean && est.mean <= hi);
        }
    }

    #[test]
    fn subject_draws_keep_comparisons_together() {
        let s = three_subjects();
        let cfg = BootstrapConfig { m: 6, seed: 5, unit: ResampleUnit::Subject };
        for r in 0..6 {
            let rep = resample(&s, &cfg, r).unwrap();
            for subject in ["s0", "s1", "s2"] {
                let orig = s.comparisons().iter().filter(|c| c.probe_subject == subject).count();
                let got = rep.comparisons().iter().filter(|c| c.probe_subject == subject).count();
                assert_eq!(got % orig, 0, "{subject} split across draws");
            }
            assert!(rep.probe_subjects().len() <= 3);
        }
    }

    #[test]
    fn missing_group_names_replicate() {
        let s = three_subjects();
        let sel = Some("WM".parse().unwrap());
        let err = bootstrap_group_tmr(&s, 1.0, &[sel], &BootstrapConfig::default()).unwrap_err();
        match err {
            Error::Replicate { index, cause } => {
                assert_eq!(index, 0);
                assert!(cause.contains("WM"));
            }
            other => panic!("unexpected {other}"),
        }
    }
}
