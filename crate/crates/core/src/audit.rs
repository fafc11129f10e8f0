//! Audit pipelines: verification from raw scores or published summaries, and
//! open-set identification from embeddings or a score table.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use fairprint_stats::{anova_f_from_summaries, GrandMean, GroupSummary, ProportionSummary, RateUnit};

use crate::diagnostics::{
    flag_outliers, minimal_flips, quality_compare, sample_groups, two_prop_or_convention, welch_or_convention,
    FlipMode,
};
use crate::domain::{
    calibrate_threshold_fmr, default_pairs, partition_by_group, roc_curve, verification_rates, DemographicGroup,
    GroupSelector, RatePoint, ScoreSet, SubjectTable,
};
use crate::error::{Error, Result};
use crate::io::{Dataset, SummaryRow};
use crate::openset::{
    bootstrap_rate, build_gallery, calibrate_threshold_fnir, fnir, fpir, search_all, sweep, sweep_grid,
    tpir, CohortSizes, CohortSubject, GalleryEntry, ScoreSource, SearchOutcome, DEFAULT_RANK,
};
use crate::report::{
    AnovaRow, AuditReport, DataSummary, Diagnostics, EstimateRow, GroupCount, GroupFmr, GroupFmrCalibration, IdentGroupRow, IdentificationSection,
    OutlierSection, PairRow, RocCurve, SweepCurve, ThresholdReport,
};
use crate::resample::{bootstrap_group_tmr, BootstrapConfig, Metric};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_SWEEP_POINTS: usize = 50;
pub const DEFAULT_ROC_POINTS: usize = 200;
pub const DEFAULT_OUTLIER_LISTING: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditMode {
    Verify,
    Summaries,
    Ident,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdSource {
    Fixed {
        #[serde(with = "fairprint_stats::serde_float")]
        value: f64,
    },
    /// Calibrated on all impostor scores.
    TargetFmr { target: f64 },
    /// Calibrated on the mated searches of one reference group.
    TargetFnir { target: f64, reference: GroupSelector },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub mode: AuditMode,
    pub threshold: Option<ThresholdSource>,
    pub groups: Vec<GroupSelector>,
    pub pairs: Vec<(GroupSelector, GroupSelector)>,
    pub alpha: f64,
    pub bootstrap: BootstrapConfig,
    /// Grand mean for the supplied-mean ANOVA; defaults to the bootstrap
    /// mean over the whole population when raw scores are available.
    pub grand_mean: Option<f64>,
    pub point_tests: bool,
    pub flip_modes: Vec<FlipMode>,
    pub rank: usize,
    /// `None` picks the smallest cohort and enrolls 200/762 of it as mates.
    pub cohort: Option<CohortSizes>,
    pub sweep_points: usize,
    pub roc_points: usize,
    pub outlier_listing: usize,
    /// Seed for equal per-group quality sampling; `None` uses every sample.
    pub quality_equal_sampling: Option<u64>,
}

impl AuditConfig {
    pub fn new(mode: AuditMode) -> Self {
        let pairs = match mode {
            AuditMode::Ident => default_pairs().into_iter().filter(|(a, b)| a.composite().is_some() && b.composite().is_some()).collect(),
            _ => default_pairs(),
        };
        let groups = match mode {
            AuditMode::Ident => DemographicGroup::canonical().into_iter().map(GroupSelector::Composite).collect(),
            _ => GroupSelector::canonical_with_marginals(),
        };
        Self {
            mode,
            threshold: None,
            groups,
            pairs,
            alpha: DEFAULT_ALPHA,
            bootstrap: BootstrapConfig::default(),
            grand_mean: None,
            point_tests: true,
            flip_modes: vec![FlipMode::PointZ],
            rank: DEFAULT_RANK,
            cohort: None,
            sweep_points: DEFAULT_SWEEP_POINTS,
            roc_points: DEFAULT_ROC_POINTS,
            outlier_listing: DEFAULT_OUTLIER_LISTING,
            quality_equal_sampling: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.bootstrap.validate()?;
        if self.rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        match (&self.mode, &self.threshold) {
            (AuditMode::Summaries, _) => {}
            (_, None) => {
                return Err(Error::Config("exactly one of --threshold, --target-fmr, --target-fnir is required".into()))
            }
            (AuditMode::Verify, Some(ThresholdSource::TargetFnir { .. })) => {
                return Err(Error::Config("FNIR targets apply to identification audits".into()))
            }
            (AuditMode::Ident, Some(ThresholdSource::TargetFmr { .. })) => {
                return Err(Error::Config("FMR targets apply to verification audits".into()))
            }
            _ => {}
        }
        match &self.threshold {
            Some(ThresholdSource::Fixed { value }) if value.is_nan() => {
                return Err(Error::Config("threshold must be a number".into()))
            }
            Some(ThresholdSource::TargetFnir { reference, .. }) if reference.composite().is_none() => {
                return Err(Error::Config(format!("reference group {reference} must be a composite group")))
            }
            _ => {}
        }
        if self.mode == AuditMode::Ident {
            for g in self.groups.iter().chain(self.pairs.iter().flat_map(|(a, b)| [a, b])) {
                if g.composite().is_none() {
                    return Err(Error::Config(format!("identification audits use composite groups, got {g}")));
                }
            }
        }
        Ok(())
    }

    /// Configured groups followed by any extra groups named in pairs.
    fn all_groups(&self) -> Vec<GroupSelector> {
        let mut out = self.groups.clone();
        for (a, b) in &self.pairs {
            for g in [a, b] {
                if !out.contains(g) {
                    out.push(g.clone());
                }
            }
        }
        out
    }
}

fn pair_label(a: &GroupSelector, b: &GroupSelector) -> String {
    format!("{a}:{b}")
}

fn estimate_row(
    group: Option<GroupSelector>,
    metric: Metric,
    summary: GroupSummary,
    replicates: Option<Vec<f64>>,
    point: Option<f64>,
) -> EstimateRow {
    EstimateRow { group, metric, mean: summary.mean, std: summary.std, m: summary.m, unit: summary.unit, replicates, point }
}

/// Pairwise Welch tests over estimate rows, in configured pair order.
fn welch_pairs(
    pairs: &[(GroupSelector, GroupSelector)],
    summaries: &BTreeMap<GroupSelector, GroupSummary>,
    alpha: f64,
    warnings: &mut Vec<String>,
) -> Result<Vec<PairRow>> {
    pairs
        .iter()
        .map(|(a, b)| {
            let (Some(sa), Some(sb)) = (summaries.get(a), summaries.get(b)) else {
                return Err(Error::Config(format!("pair {} names a group without an estimate", pair_label(a, b))));
            };
            let test = welch_or_convention(*sa, *sb, alpha)
                .map_err(|e| e.context(format!("pair {}", pair_label(a, b))))?;
            let note = test.degenerate.then(|| {
                let msg = format!(
                    "pair {}: both groups have zero replicate variance; decision by convention (increase m or use the two-proportion z-test)",
                    pair_label(a, b)
                );
                warnings.push(msg.clone());
                msg
            });
            Ok(PairRow { a: a.clone(), b: b.clone(), test, note })
        })
        .collect()
}

/// ANOVA over the composite groups that have estimates, in both grand-mean
/// modes when a supplied mean is available.
fn anova_rows(
    summaries: &BTreeMap<GroupSelector, GroupSummary>,
    alpha: f64,
    supplied: Option<f64>,
    warnings: &mut Vec<String>,
) -> Result<Vec<AnovaRow>> {
    let groups: Vec<(&GroupSelector, &GroupSummary)> =
        summaries.iter().filter(|(g, _)| g.composite().is_some()).collect();
    if groups.len() < 2 {
        warnings.push("ANOVA skipped: fewer than two composite groups".into());
        return Ok(Vec::new());
    }
    let names: Vec<GroupSelector> = groups.iter().map(|(g, _)| (*g).clone()).collect();
    let values: Vec<GroupSummary> = groups.iter().map(|(_, s)| **s).collect();
    let mut modes = vec![GrandMean::Unweighted];
    match supplied {
        Some(v) => modes.push(GrandMean::Supplied(v)),
        None => warnings.push("supplied-grand-mean ANOVA skipped: no overall rate available".into()),
    }
    modes
        .into_iter()
        .map(|mode| {
            let test = anova_f_from_summaries(&values, alpha, mode)?;
            Ok(AnovaRow { grand_mean: mode, groups: names.clone(), test })
        })
        .collect()
}

/// Evenly thinned copy of `points` keeping both ends.
fn thin<T: Clone>(points: &[T], max: usize) -> Vec<T> {
    if points.len() <= max || max < 2 {
        return points.to_vec();
    }
    (0..max).map(|i| points[i * (points.len() - 1) / (max - 1)].clone()).collect()
}

fn data_summary(scores: &ScoreSet, rejected: u64) -> DataSummary {
    let part = partition_by_group(scores, true);
    let groups = part
        .groups
        .iter()
        .map(|(g, s)| GroupCount {
            group: g.clone(),
            genuine: s.genuine_count() as u64,
            impostor: (s.len() - s.genuine_count()) as u64,
            subjects: s.probe_subjects().len() as u64,
        })
        .collect();
    DataSummary {
        comparisons: scores.len() as u64,
        genuine: scores.genuine_count() as u64,
        impostor: (scores.len() - scores.genuine_count()) as u64,
        subjects: scores.subjects().len() as u64,
        unlabeled_comparisons: part.unlabeled.len() as u64,
        rejected_rows: rejected,
        groups,
    }
}

/// Verification audit from raw comparison scores.
pub fn run_verification_audit(config: &AuditConfig, data: &Dataset) -> Result<AuditReport> {
    config.validate()?;
    if config.mode != AuditMode::Verify {
        return Err(Error::Config("run_verification_audit needs a verify configuration".into()));
    }
    let scores = data.scores.as_ref().ok_or_else(|| Error::Config("verification audit needs scores".into()))?;
    if scores.is_empty() {
        return Err(Error::EmptyScoreSet);
    }
    let mut warnings = config.bootstrap.warnings();
    let rejected = data.fingerprints.iter().map(|f| f.rejected).sum();
    let summary = data_summary(scores, rejected);

    let groups = config.all_groups();
    for g in &groups {
        let present = summary.groups.iter().any(|c| &c.group == g && c.genuine > 0);
        if !present {
            return Err(Error::Config(format!("group {g} has no genuine comparisons in the data")));
        }
    }

    // threshold
    let all_impostor: Vec<f64> = scores.impostor_scores().collect();
    let mut threshold_report = match config.threshold.as_ref().expect("validated") {
        ThresholdSource::Fixed { value } => ThresholdReport::fixed(*value),
        ThresholdSource::TargetFmr { target } => {
            let cal = calibrate_threshold_fmr(&all_impostor, *target).map_err(|e| e.context("global FMR calibration"))?;
            ThresholdReport::from_fmr(cal)
        }
        ThresholdSource::TargetFnir { .. } => unreachable!("rejected by validate"),
    };
    let threshold = threshold_report.value;
    if let ThresholdSource::TargetFmr { target } = config.threshold.as_ref().unwrap() {
        for g in groups.iter() {
            let imp: Vec<f64> = scores.for_selector(g).impostor_scores().collect();
            if imp.is_empty() {
                continue;
            }
            threshold_report.per_group_fmr_calibration.push(GroupFmrCalibration {
                group: g.clone(),
                calibration: calibrate_threshold_fmr(&imp, *target)?,
            });
        }
    }
    for g in &groups {
        let rp = verification_rates(&scores.for_selector(g), threshold)?;
        threshold_report.per_group_fmr.push(GroupFmr { group: g.clone(), fmr: rp.fmr });
    }
    threshold_report.global_fmr = verification_rates(scores, threshold)?.fmr;

    // bootstrap TMR
    let mut selectors: Vec<Option<GroupSelector>> = groups.iter().cloned().map(Some).collect();
    selectors.push(None);
    let estimates = bootstrap_group_tmr(scores, threshold, &selectors, &config.bootstrap)
        .map_err(|e| e.context("bootstrap TMR"))?;
    let population_mean = estimates.last().map(|e| e.mean);
    let mut rows = Vec::new();
    let mut summaries = BTreeMap::new();
    let mut points: BTreeMap<GroupSelector, RatePoint> = BTreeMap::new();
    for est in &estimates {
        let set = match &est.group {
            Some(g) => scores.for_selector(g),
            None => scores.clone(),
        };
        let rp = verification_rates(&set, threshold)?;
        let s = est.summary(RateUnit::Fraction)?;
        rows.push(estimate_row(est.group.clone(), Metric::Tmr, s, Some(est.replicates.clone()), rp.tmr.value()));
        if let Some(g) = &est.group {
            summaries.insert(g.clone(), s);
            points.insert(g.clone(), rp);
        }
    }

    let pairwise = welch_pairs(&config.pairs, &summaries, config.alpha, &mut warnings)?;
    let point_tests = if config.point_tests {
        config
            .pairs
            .iter()
            .map(|(a, b)| {
                let pa = &points[a];
                let pb = &points[b];
                let test = two_prop_or_convention(
                    ProportionSummary::from_counts(pa.genuine_accepted, pa.n_genuine)?,
                    ProportionSummary::from_counts(pb.genuine_accepted, pb.n_genuine)?,
                    config.alpha,
                )?;
                Ok(PairRow { a: a.clone(), b: b.clone(), test, note: None })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let anova = anova_rows(&summaries, config.alpha, config.grand_mean.or(population_mean), &mut warnings)?;

    // ROC: whole population and every composite group with both sides
    let mut roc = Vec::new();
    let mut roc_sets: Vec<(Option<GroupSelector>, ScoreSet)> = vec![(None, scores.clone())];
    roc_sets.extend(groups.iter().filter(|g| g.composite().is_some()).map(|g| (Some(g.clone()), scores.for_selector(g))));
    for (g, set) in roc_sets {
        match roc_curve(&set) {
            Ok(points) => roc.push(RocCurve { group: g, points: thin(&points, config.roc_points) }),
            Err(e) => warnings.push(format!("ROC for {} skipped: {e}", g.map_or("all".into(), |g| g.to_string()))),
        }
    }

    let diagnostics = verification_diagnostics(config, scores, data.quality.as_ref(), threshold, &mut warnings)?;

    Ok(AuditReport {
        mode: AuditMode::Verify,
        config: config.clone(),
        inputs: data.fingerprints.clone(),
        data: Some(summary),
        threshold: Some(threshold_report),
        estimates: rows,
        pairwise,
        point_tests,
        anova,
        identification: None,
        roc,
        diagnostics,
        warnings,
        ..AuditReport::empty()
    })
}

fn verification_diagnostics(
    config: &AuditConfig,
    scores: &ScoreSet,
    quality: Option<&BTreeMap<String, f64>>,
    threshold: f64,
    warnings: &mut Vec<String>,
) -> Result<Diagnostics> {
    let flags = flag_outliers(scores, threshold, quality)?;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for f in &flags {
        *counts.entry(f.group.code()).or_default() += 1;
    }
    let outliers = OutlierSection {
        total: flags.len() as u64,
        by_group: counts,
        lowest: flags.into_iter().take(config.outlier_listing).collect(),
    };

    let mut flips = Vec::new();
    for mode in &config.flip_modes {
        for pair in &config.pairs {
            flips.push(
                minimal_flips(scores, pair, threshold, config.alpha, *mode, &config.bootstrap)
                    .map_err(|e| e.context(format!("flip analysis {}", pair_label(&pair.0, &pair.1))))?,
            );
        }
    }

    let quality = match quality {
        None => None,
        Some(q) => {
            let owners = sample_groups(scores);
            match quality_compare(q, &owners, &config.groups, &config.pairs, config.alpha, config.quality_equal_sampling) {
                Ok(r) => Some(r),
                Err(e) => {
                    warnings.push(format!("quality comparison skipped: {e}"));
                    None
                }
            }
        }
    };
    Ok(Diagnostics { outliers: Some(outliers), flips, quality })
}

/// Verification audit from pre-aggregated (mean, std, m) rows.
pub fn run_summary_audit(config: &AuditConfig, rows: &[SummaryRow], inputs: &Dataset) -> Result<AuditReport> {
    config.validate()?;
    let mut warnings = Vec::new();
    let summaries: BTreeMap<GroupSelector, GroupSummary> = rows.iter().map(|r| (r.group.clone(), r.summary)).collect();
    let units: BTreeSet<&str> = rows.iter().map(|r| r.summary.unit.name()).collect();
    if units.len() > 1 {
        return Err(Error::Data("summary rows mix fraction and percent units".into()));
    }
    let estimates = rows.iter().map(|r| estimate_row(Some(r.group.clone()), Metric::Tmr, r.summary, None, None)).collect();
    let pairs: Vec<(GroupSelector, GroupSelector)> = config.pairs.clone();
    let pairwise = welch_pairs(&pairs, &summaries, config.alpha, &mut warnings)?;
    let anova = anova_rows(&summaries, config.alpha, config.grand_mean, &mut warnings)?;
    Ok(AuditReport {
        mode: AuditMode::Summaries,
        config: config.clone(),
        inputs: inputs.fingerprints.clone(),
        estimates,
        pairwise,
        anova,
        warnings,
        ..AuditReport::empty()
    })
}

/// Samples per subject and the similarity oracle for an identification audit.
pub struct IdentData<'a> {
    pub subjects: &'a SubjectTable,
    /// Every sample id available for each subject, labelled or not.
    pub samples: BTreeMap<String, BTreeSet<String>>,
    pub source: &'a dyn ScoreSource,
}

impl<'a> IdentData<'a> {
    pub fn from_embeddings(subjects: &'a SubjectTable, store: &'a crate::openset::EmbeddingStore) -> Self {
        let mut samples: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in store.records() {
            samples.entry(r.subject_id.clone()).or_default().insert(r.sample_id.clone());
        }
        Self { subjects, samples, source: store }
    }

    pub fn from_score_table(
        subjects: &'a SubjectTable,
        table: &'a crate::openset::ScoreTable,
        samples: crate::io::SampleIndex,
    ) -> Self {
        Self { subjects, samples, source: table }
    }

    /// Labelled subjects with at least two samples: the lowest sample id is
    /// enrolled and the next one probes. Unlabelled subjects become
    /// distractors through their lowest sample id.
    fn cohorts(&self) -> (BTreeMap<DemographicGroup, Vec<CohortSubject>>, Vec<GalleryEntry>) {
        let mut cohorts: BTreeMap<DemographicGroup, Vec<CohortSubject>> = BTreeMap::new();
        let mut distractors = Vec::new();
        for (subject, samples) in &self.samples {
            let mut it = samples.iter();
            match self.subjects.group_of(subject) {
                Some(g) if g.is_canonical() => {
                    if let (Some(e), Some(p)) = (it.next(), it.next()) {
                        cohorts.entry(g.clone()).or_default().push(CohortSubject {
                            subject_id: subject.clone(),
                            enroll_sample: e.clone(),
                            probe_sample: p.clone(),
                        });
                    }
                }
                Some(_) => {}
                None => {
                    if let Some(s) = it.next() {
                        distractors.push(GalleryEntry { sample_id: s.clone(), subject_id: subject.clone() });
                    }
                }
            }
        }
        (cohorts, distractors)
    }
}

struct GroupSearch {
    group: GroupSelector,
    gallery_size: usize,
    mated: Vec<SearchOutcome>,
    nonmated: Vec<SearchOutcome>,
}

/// Cohorts, distractors and cohort sizes shared by every audited group.
struct IdentPlan {
    sizes: CohortSizes,
    distractors: Vec<GalleryEntry>,
    used: BTreeMap<DemographicGroup, Vec<CohortSubject>>,
}

impl IdentPlan {
    fn new(config: &AuditConfig, data: &IdentData) -> Result<Self> {
        let (cohorts, distractors) = data.cohorts();
        let groups = config.all_groups();
        for g in &groups {
            let c = g.composite().expect("validated");
            if !cohorts.contains_key(c) {
                return Err(Error::Config(format!("group {g} has no subjects with two samples")));
            }
        }
        let sizes = match config.cohort {
            Some(s) => s,
            None => {
                let per_group = groups.iter().map(|g| cohorts[g.composite().unwrap()].len()).min().unwrap_or(0);
                CohortSizes { per_group, n_mates: (per_group * 200 / 762).max(1).min(per_group.saturating_sub(1)) }
            }
        };
        // only the audited groups take part in gallery construction
        let used = groups
            .iter()
            .map(|g| {
                let c = g.composite().unwrap();
                (c.clone(), cohorts[c].clone())
            })
            .collect();
        Ok(Self { sizes, distractors, used })
    }

    fn search(&self, config: &AuditConfig, data: &IdentData, g: &GroupSelector) -> Result<GroupSearch> {
        let audited = g.composite().expect("validated");
        let (gallery, cohort) = build_gallery(&self.distractors, &self.used, audited, self.sizes, config.bootstrap.seed)
            .map_err(|e| e.context(format!("gallery for {g}")))?;
        let mated = search_all(&cohort.mated, &gallery, data.source, config.rank)?;
        let nonmated = search_all(&cohort.nonmated, &gallery, data.source, config.rank)?;
        Ok(GroupSearch { group: g.clone(), gallery_size: gallery.len(), mated, nonmated })
    }
}

/// FNIR-calibrated shared threshold, searching only the reference group.
pub fn identification_threshold(config: &AuditConfig, data: &IdentData) -> Result<ThresholdReport> {
    config.validate()?;
    let Some(ThresholdSource::TargetFnir { target, reference }) = config.threshold.as_ref() else {
        return Err(Error::Config("identification calibration needs --target-fnir and --ref-group".into()));
    };
    let mut config = config.clone();
    if !config.groups.contains(reference) {
        config.groups.push(reference.clone());
    }
    let plan = IdentPlan::new(&config, data)?;
    let search = plan.search(&config, data, reference)?;
    let cal = calibrate_threshold_fnir(&search.mated, *target, config.rank)
        .map_err(|e| e.context(format!("FNIR calibration on {reference}")))?;
    Ok(ThresholdReport::from_fnir(cal, reference.clone()))
}

/// Identification audit: one gallery per audited group, a shared threshold,
/// bootstrap FPIR per group, Welch tests on FPIR and an FPIR/FNIR sweep.
pub fn run_identification_audit(config: &AuditConfig, data: &IdentData, inputs: &Dataset) -> Result<AuditReport> {
    config.validate()?;
    if config.mode != AuditMode::Ident {
        return Err(Error::Config("run_identification_audit needs an ident configuration".into()));
    }
    let mut warnings = config.bootstrap.warnings();
    let plan = IdentPlan::new(config, data)?;
    let groups = config.all_groups();
    let searches = groups.iter().map(|g| plan.search(config, data, g)).collect::<Result<Vec<_>>>()?;
    let sizes = plan.sizes;
    let distractors = &plan.distractors;

    let mut threshold_report = match config.threshold.as_ref().expect("validated") {
        ThresholdSource::Fixed { value } => ThresholdReport::fixed(*value),
        ThresholdSource::TargetFnir { target, reference } => {
            let reference_search = searches
                .iter()
                .find(|s| &s.group == reference)
                .ok_or_else(|| Error::Config(format!("reference group {reference} is not audited")))?;
            let cal = calibrate_threshold_fnir(&reference_search.mated, *target, config.rank)
                .map_err(|e| e.context(format!("FNIR calibration on {reference}")))?;
            ThresholdReport::from_fnir(cal, reference.clone())
        }
        ThresholdSource::TargetFmr { .. } => unreachable!("rejected by validate"),
    };
    let threshold = threshold_report.value;
    threshold_report.global_fmr = crate::domain::Rate::Undefined;

    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    let mut summaries = BTreeMap::new();
    for s in &searches {
        let fpir_est = bootstrap_rate(&s.nonmated, Some(s.group.clone()), Metric::Fpir, threshold, config.rank, &config.bootstrap)
            .map_err(|e| e.context(format!("bootstrap FPIR for {}", s.group)))?;
        let fpir_point = fpir(&s.nonmated, threshold);
        let summary = fpir_est.summary(RateUnit::Fraction)?;
        summaries.insert(s.group.clone(), summary);
        estimates.push(estimate_row(Some(s.group.clone()), Metric::Fpir, summary, Some(fpir_est.replicates.clone()), fpir_point.value()));
        let fnir_point = fnir(&s.mated, threshold, config.rank);
        if !s.mated.is_empty() {
            let est = bootstrap_rate(&s.mated, Some(s.group.clone()), Metric::Fnir, threshold, config.rank, &config.bootstrap)
                .map_err(|e| e.context(format!("bootstrap FNIR for {}", s.group)))?;
            estimates.push(estimate_row(
                Some(s.group.clone()),
                Metric::Fnir,
                est.summary(RateUnit::Fraction)?,
                Some(est.replicates),
                fnir_point.value(),
            ));
        } else {
            warnings.push(format!("group {}: no mated probes, FNIR undefined", s.group));
        }
        rows.push(IdentGroupRow {
            group: s.group.clone(),
            threshold,
            gallery_size: s.gallery_size as u64,
            n_mated: s.mated.len() as u64,
            n_nonmated: s.nonmated.len() as u64,
            fpir: fpir_point,
            fnir: fnir_point,
            tpir: tpir(&s.mated, config.rank),
        });
    }
    let pairwise = welch_pairs(&config.pairs, &summaries, config.alpha, &mut warnings)?;

    let all: Vec<SearchOutcome> = searches.iter().flat_map(|s| s.mated.iter().chain(&s.nonmated).cloned()).collect();
    let grid = sweep_grid(&all, config.sweep_points);
    let sweeps = searches
        .iter()
        .map(|s| SweepCurve { group: s.group.clone(), points: sweep(&s.nonmated, &s.mated, &grid, config.rank) })
        .collect();

    Ok(AuditReport {
        mode: AuditMode::Ident,
        config: config.clone(),
        inputs: inputs.fingerprints.clone(),
        threshold: Some(threshold_report),
        estimates,
        pairwise,
        identification: Some(IdentificationSection {
            threshold,
            rank: config.rank,
            cohort: sizes,
            distractors: distractors.len() as u64,
            groups: rows,
            sweeps,
        }),
        warnings,
        ..AuditReport::empty()
    })
}

/// Decision threshold for a verification configuration: the fixed value, or
/// the FMR-calibrated threshold over all impostor scores.
pub fn verification_threshold(config: &AuditConfig, scores: &ScoreSet) -> Result<f64> {
    match config.threshold.as_ref() {
        Some(ThresholdSource::Fixed { value }) => Ok(*value),
        Some(ThresholdSource::TargetFmr { target }) => {
            let imp: Vec<f64> = scores.impostor_scores().collect();
            Ok(calibrate_threshold_fmr(&imp, *target)?.threshold)
        }
        _ => Err(Error::Config("verification needs --threshold or --target-fmr".into())),
    }
}

/// Minimal-flip analysis for every configured pair and flip mode.
pub fn run_sensitivity(config: &AuditConfig, scores: &ScoreSet) -> Result<Vec<crate::diagnostics::FlipReport>> {
    config.validate()?;
    let threshold = verification_threshold(config, scores)?;
    let mut out = Vec::new();
    for mode in &config.flip_modes {
        for pair in &config.pairs {
            out.push(
                minimal_flips(scores, pair, threshold, config.alpha, *mode, &config.bootstrap)
                    .map_err(|e| e.context(format!("flip analysis {}", pair_label(&pair.0, &pair.1))))?,
            );
        }
    }
    Ok(out)
}

/// Per-group quality distributions and pairwise Welch tests on mean quality.
pub fn run_quality(
    config: &AuditConfig,
    scores: &ScoreSet,
    quality: &BTreeMap<String, f64>,
) -> Result<crate::diagnostics::QualityComparison> {
    let owners = sample_groups(scores);
    quality_compare(quality, &owners, &config.groups, &config.pairs, config.alpha, config.quality_equal_sampling)
}
