//! Helpers and brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use fairprint_core::diagnostics::FlipMode;
use fairprint_core::domain::{verification_rates, DemographicGroup, GroupSelector, ScoreSet};
use fairprint_core::io::Dataset;
use fairprint_core::openset::{CohortSubject, EmbeddingStore, GalleryEntry, Probe};
use fairprint_core::resample::{bootstrap_group_tmr, BootstrapConfig};
use fairprint_core::synth::{generate, GroupScoreModel};
use fairprint_core::domain::SubjectTable;
use fairprint_stats::{two_prop_z, welch_t, GroupSummary, ProportionSummary, RateUnit, TestResult};

pub fn group(code: &str) -> DemographicGroup {
    DemographicGroup::new(&code[..1], &code[1..]).unwrap()
}

pub fn sel(code: &str) -> GroupSelector {
    code.parse().unwrap()
}

/// Default models for the four canonical groups, adjusted by `tweak`.
pub fn models(n_subjects: usize, tweak: impl Fn(&mut GroupScoreModel)) -> Vec<GroupScoreModel> {
    DemographicGroup::canonical()
        .into_iter()
        .map(|g| {
            let mut m = GroupScoreModel { n_subjects, ..GroupScoreModel::with_defaults(g) };
            tweak(&mut m);
            m
        })
        .collect()
}

pub fn verification_dataset(models: &[GroupScoreModel], seed: u64) -> Dataset {
    let ds = generate(models, seed).unwrap();
    Dataset {
        subjects: Some(ds.score_set.subjects().clone()),
        scores: Some(ds.score_set),
        quality: Some(ds.quality),
        ..Dataset::default()
    }
}

/// Labelled subjects enroll their lowest sample id and probe with the next;
/// unlabelled ones become distractors.
pub fn cohorts_from_store(
    store: &EmbeddingStore,
    subjects: &SubjectTable,
) -> (BTreeMap<DemographicGroup, Vec<CohortSubject>>, Vec<GalleryEntry>) {
    let mut samples: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in store.records() {
        samples.entry(&r.subject_id).or_default().push(&r.sample_id);
    }
    let mut cohorts: BTreeMap<DemographicGroup, Vec<CohortSubject>> = BTreeMap::new();
    let mut distractors = Vec::new();
    for (subject, mut s) in samples {
        s.sort();
        match subjects.group_of(subject) {
            Some(g) => cohorts.entry(g.clone()).or_default().push(CohortSubject {
                subject_id: subject.to_string(),
                enroll_sample: s[0].to_string(),
                probe_sample: s[1].to_string(),
            }),
            None => distractors.push(GalleryEntry { sample_id: s[0].to_string(), subject_id: subject.to_string() }),
        }
    }
    (cohorts, distractors)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Raw inner-product scores of `probe` against every gallery entry.
pub fn raw_scores(store: &EmbeddingStore, probe: &Probe, gallery: &[GalleryEntry]) -> Vec<(f64, String, String)> {
    let p = &store.get(&probe.sample_id).unwrap().vec;
    gallery
        .iter()
        .map(|e| (dot(p, &store.get(&e.sample_id).unwrap().vec), e.sample_id.clone(), e.subject_id.clone()))
        .collect()
}

/// FPIR recomputed from raw scores: any gallery score at or above threshold.
pub fn brute_fpir(store: &EmbeddingStore, probes: &[Probe], gallery: &[GalleryEntry], t: f64) -> f64 {
    let hits = probes
        .iter()
        .filter(|p| raw_scores(store, p, gallery).iter().any(|(s, _, _)| *s >= t))
        .count();
    hits as f64 / probes.len() as f64
}

/// 1-based rank of the mate: entries strictly better, with ties broken by
/// ascending sample id.
pub fn brute_mate(store: &EmbeddingStore, probe: &Probe, gallery: &[GalleryEntry]) -> (usize, f64) {
    let scores = raw_scores(store, probe, gallery);
    let (ms, mid, _) = scores.iter().find(|(_, _, subj)| *subj == probe.subject_id).unwrap().clone();
    let ahead = scores.iter().filter(|(s, id, _)| *s > ms || (*s == ms && *id < mid)).count();
    (ahead + 1, ms)
}

pub fn brute_fnir(store: &EmbeddingStore, probes: &[Probe], gallery: &[GalleryEntry], t: f64, rank: usize) -> f64 {
    let misses = probes
        .iter()
        .filter(|p| {
            let (r, s) = brute_mate(store, p, gallery);
            r > rank || s < t
        })
        .count();
    misses as f64 / probes.len() as f64
}

pub fn brute_tpir(store: &EmbeddingStore, probes: &[Probe], gallery: &[GalleryEntry], rank: usize) -> f64 {
    let hits = probes.iter().filter(|p| brute_mate(store, p, gallery).0 <= rank).count();
    hits as f64 / probes.len() as f64
}

/// Indices of genuine comparisons whose probe belongs to `g`.
fn genuine_of(scores: &ScoreSet, g: &GroupSelector) -> Vec<usize> {
    (0..scores.len())
        .filter(|&i| scores.comparisons()[i].mated && sel_matches(scores, i, g))
        .collect()
}

fn sel_matches(scores: &ScoreSet, i: usize, g: &GroupSelector) -> bool {
    let pg = scores.probe_group(i);
    pg.is_canonical() && g.matches(pg)
}

fn pair_test(scores: &ScoreSet, pair: &(GroupSelector, GroupSelector), t: f64, alpha: f64, mode: FlipMode, cfg: &BootstrapConfig) -> Option<TestResult> {
    match mode {
        FlipMode::PointZ => {
            let a = verification_rates(&scores.for_selector(&pair.0), t).unwrap();
            let b = verification_rates(&scores.for_selector(&pair.1), t).unwrap();
            two_prop_z(
                ProportionSummary::from_counts(a.genuine_accepted, a.n_genuine).unwrap(),
                ProportionSummary::from_counts(b.genuine_accepted, b.n_genuine).unwrap(),
                alpha,
            )
            .ok()
        }
        FlipMode::BootstrapWelch => {
            let est = bootstrap_group_tmr(scores, t, &[Some(pair.0.clone()), Some(pair.1.clone())], cfg).unwrap();
            let s = |i: usize| GroupSummary::from_replicates(&est[i].replicates, RateUnit::Fraction).unwrap();
            welch_t(s(0), s(1), alpha).ok()
        }
    }
}

/// Exhaustive minimal-flip oracle: tries every flip count from zero, raising
/// the lowest below-threshold genuine scores of the lower group to the
/// threshold, and returns the first count that does not reject. `None` when
/// the instance has a degenerate test (the oracle abstains).
pub fn exhaustive_flips(
    scores: &ScoreSet,
    pair: &(GroupSelector, GroupSelector),
    t: f64,
    alpha: f64,
    mode: FlipMode,
    cfg: &BootstrapConfig,
) -> Option<Option<usize>> {
    let before = pair_test(scores, pair, t, alpha, mode, cfg)?;
    if !before.reject {
        return Some(Some(0));
    }
    let lower = if before.statistic > 0.0 { &pair.1 } else { &pair.0 };
    let mut cands: Vec<usize> = genuine_of(scores, lower)
        .into_iter()
        .filter(|&i| scores.comparisons()[i].score < t)
        .collect();
    cands.sort_by(|&a, &b| scores.comparisons()[a].score.total_cmp(&scores.comparisons()[b].score).then(a.cmp(&b)));
    for k in 1..=cands.len() {
        let updates: Vec<(usize, f64)> = cands[..k].iter().map(|&i| (i, t)).collect();
        let flipped = scores.with_scores(&updates).unwrap();
        let test = pair_test(&flipped, pair, t, alpha, mode, cfg)?;
        if !test.reject {
            return Some(Some(k));
        }
    }
    Some(None)
}

/// Number of below-threshold genuine scores in group `g`.
pub fn below_threshold(scores: &ScoreSet, g: &GroupSelector, t: f64) -> usize {
    genuine_of(scores, g).into_iter().filter(|&i| scores.comparisons()[i].score < t).count()
}
