//! Open-set identification: gallery construction, exhaustive rank-R search,
//! FPIR / FNIR / TPIR and FNIR-targeted threshold calibration.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DemographicGroup, GroupSelector, Rate};
use crate::error::{Error, Result};
use crate::resample::{bootstrap_values, BootstrapConfig, BootstrapEstimate, Metric};
use crate::rng::Stream;

pub const DEFAULT_RANK: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub sample_id: String,
    pub subject_id: String,
}

/// Enrolled samples, one per identity, kept sorted by sample id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Gallery {
    entries: Vec<GalleryEntry>,
}

impl Gallery {
    pub fn new(mut entries: Vec<GalleryEntry>) -> Result<Self> {
        entries.sort();
        for w in entries.windows(2) {
            if w[0].sample_id == w[1].sample_id {
                return Err(Error::Data(format!("gallery sample {:?} enrolled twice", w[0].sample_id)));
            }
        }
        let mut subjects = BTreeSet::new();
        for e in &entries {
            if !subjects.insert(e.subject_id.as_str()) {
                return Err(Error::Data(format!("subject {:?} has more than one gallery sample", e.subject_id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[GalleryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_subject(&self, subject_id: &str) -> bool {
        self.entries.iter().any(|e| e.subject_id == subject_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Probe {
    pub sample_id: String,
    pub subject_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeCohort {
    /// Probes whose subject is enrolled.
    pub mated: Vec<Probe>,
    /// Probes with no enrolled mate.
    pub nonmated: Vec<Probe>,
}

impl ProbeCohort {
    pub fn validate(&self, gallery: &Gallery) -> Result<()> {
        let enrolled: BTreeSet<&str> = gallery.entries.iter().map(|e| e.subject_id.as_str()).collect();
        let mated: BTreeSet<&str> = self.mated.iter().map(|p| p.subject_id.as_str()).collect();
        for p in &self.mated {
            if !enrolled.contains(p.subject_id.as_str()) {
                return Err(Error::Data(format!("mated probe subject {:?} is not enrolled", p.subject_id)));
            }
        }
        for p in &self.nonmated {
            if enrolled.contains(p.subject_id.as_str()) {
                return Err(Error::Data(format!("non-mated probe subject {:?} is enrolled", p.subject_id)));
            }
            if mated.contains(p.subject_id.as_str()) {
                return Err(Error::Data(format!("subject {:?} is in both probe cohorts", p.subject_id)));
            }
        }
        Ok(())
    }
}

/// A labelled subject available for gallery construction: one sample to
/// enroll and a different one to search with.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CohortSubject {
    pub subject_id: String,
    pub enroll_sample: String,
    pub probe_sample: String,
}

/// Sizes for [`build_gallery`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSizes {
    /// Subjects sampled from every demographic group.
    pub per_group: usize,
    /// Audited-group subjects enrolled as mates.
    pub n_mates: usize,
}

impl Default for CohortSizes {
    fn default() -> Self {
        Self { per_group: 762, n_mates: 200 }
    }
}

/// Gallery and probe cohorts for auditing one group.
///
/// Every group contributes `per_group` subjects drawn with a seeded shuffle.
/// The other groups are enrolled in full; the audited group's first
/// `n_mates` draws are enrolled and searched as mated probes, and the rest are
/// searched as non-mated probes. Gallery size is
/// `distractors + (groups - 1) * per_group + n_mates`.
pub fn build_gallery(
    distractors: &[GalleryEntry],
    cohorts: &BTreeMap<DemographicGroup, Vec<CohortSubject>>,
    audited: &DemographicGroup,
    sizes: CohortSizes,
    seed: u64,
) -> Result<(Gallery, ProbeCohort)> {
    if !cohorts.contains_key(audited) {
        return Err(Error::Config(format!("audited group {audited} has no cohort")));
    }
    if sizes.n_mates >= sizes.per_group {
        return Err(Error::Config(format!(
            "need more sampled subjects per group ({}) than mates ({})",
            sizes.per_group, sizes.n_mates
        )));
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for d in distractors {
        if !seen.insert(d.subject_id.as_str()) {
            return Err(Error::Data(format!("distractor subject {:?} appears twice", d.subject_id)));
        }
    }
    for (group, members) in cohorts {
        for m in members {
            if m.enroll_sample == m.probe_sample {
                return Err(Error::Data(format!("subject {:?} enrolls its own probe sample", m.subject_id)));
            }
            if !seen.insert(m.subject_id.as_str()) {
                return Err(Error::Data(format!(
                    "subject {:?} of group {group} overlaps the distractors or another cohort",
                    m.subject_id
                )));
            }
        }
    }

    let root = Stream::new(seed);
    let mut entries = distractors.to_vec();
    let mut cohort = ProbeCohort::default();
    for (group, members) in cohorts {
        if members.len() < sizes.per_group {
            return Err(Error::Data(format!(
                "group {group} has {} subjects, {} required",
                members.len(),
                sizes.per_group
            )));
        }
        let mut pool = members.clone();
        pool.sort();
        root.derive_str(&group.code()).shuffle(&mut pool);
        pool.truncate(sizes.per_group);
        let enrolled = if group == audited { sizes.n_mates } else { pool.len() };
        for (i, s) in pool.into_iter().enumerate() {
            if i < enrolled {
                entries.push(GalleryEntry { sample_id: s.enroll_sample, subject_id: s.subject_id.clone() });
            }
            if group == audited {
                let probe = Probe { sample_id: s.probe_sample, subject_id: s.subject_id };
                if i < enrolled {
                    cohort.mated.push(probe);
                } else {
                    cohort.nonmated.push(probe);
                }
            }
        }
    }
    let gallery = Gallery::new(entries)?;
    cohort.mated.sort();
    cohort.nonmated.sort();
    cohort.validate(&gallery)?;
    Ok((gallery, cohort))
}

/// Similarity oracle over (probe sample, gallery sample).
pub trait ScoreSource: Sync {
    fn score(&self, probe_sample: &str, gallery_sample: &str) -> Result<f64>;
}

/// Precomputed similarity scores.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    scores: HashMap<(String, String), f64>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, probe_sample: &str, gallery_sample: &str, score: f64) -> Result<()> {
        if !score.is_finite() {
            return Err(Error::Data(format!("score {score} is not finite")));
        }
        let key = (probe_sample.to_string(), gallery_sample.to_string());
        if self.scores.insert(key, score).is_some() {
            return Err(Error::Data(format!("duplicate score for {probe_sample:?} vs {gallery_sample:?}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl ScoreSource for ScoreTable {
    fn score(&self, probe_sample: &str, gallery_sample: &str) -> Result<f64> {
        self.scores
            .get(&(probe_sample.to_string(), gallery_sample.to_string()))
            .copied()
            .ok_or_else(|| Error::Data(format!("no score for probe {probe_sample:?} vs gallery {gallery_sample:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub sample_id: String,
    pub subject_id: String,
    pub vec: Vec<f64>,
}

/// Fixed-length embeddings compared by inner product.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: usize,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(records: Vec<EmbeddingRecord>) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.vec.len());
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.vec.len() != dim {
                return Err(Error::Data(format!(
                    "embedding {:?} has dimension {}, expected {dim}",
                    r.sample_id,
                    r.vec.len()
                )));
            }
            if r.vec.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("embedding {:?} has a non-finite component", r.sample_id)));
            }
            if index.insert(r.sample_id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate embedding sample {:?}", r.sample_id)));
            }
        }
        Ok(Self { dim, records, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn get(&self, sample_id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(sample_id).map(|&i| &self.records[i])
    }

    fn vector(&self, sample_id: &str) -> Result<&[f64]> {
        self.get(sample_id)
            .map(|r| r.vec.as_slice())
            .ok_or_else(|| Error::Data(format!("no embedding for sample {sample_id:?}")))
    }
}

impl ScoreSource for EmbeddingStore {
    fn score(&self, probe_sample: &str, gallery_sample: &str) -> Result<f64> {
        let a = self.vector(probe_sample)?;
        let b = self.vector(gallery_sample)?;
        Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub subject_id: String,
    pub sample_id: String,
    pub score: f64,
}

/// Position of the probe's mate in the full gallery ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MateHit {
    /// 1-based.
    pub rank: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub probe: Probe,
    /// Top candidates, score descending, ties by sample id ascending.
    pub candidates: Vec<Candidate>,
    pub rank_cutoff: usize,
    /// `None` when the probe's subject is not enrolled.
    pub mate: Option<MateHit>,
}

impl SearchOutcome {
    pub fn top_score(&self) -> Option<f64> {
        self.candidates.first().map(|c| c.score)
    }
}

fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Exhaustive search of `probe` against every gallery entry.
pub fn search(probe: &Probe, gallery: &Gallery, source: &dyn ScoreSource, rank: usize) -> Result<SearchOutcome> {
    if rank == 0 {
        return Err(Error::Config("rank cutoff must be at least 1".into()));
    }
    if gallery.is_empty() {
        return Err(Error::Data("cannot search an empty gallery".into()));
    }
    let mut scored = Vec::with_capacity(gallery.len());
    for (i, e) in gallery.entries.iter().enumerate() {
        let s = source.score(&probe.sample_id, &e.sample_id)?;
        if s.is_nan() {
            return Err(Error::Data(format!("NaN score for {:?} vs {:?}", probe.sample_id, e.sample_id)));
        }
        scored.push((s, i));
    }
    let key = |&(s, i): &(f64, usize)| (s, gallery.entries[i].sample_id.as_str());

    let mate = scored
        .iter()
        .find(|&&(_, i)| gallery.entries[i].subject_id == probe.subject_id)
        .map(|m| {
            let ahead = scored.iter().filter(|o| rank_order(key(o), key(m)) == Ordering::Less).count();
            MateHit { rank: ahead + 1, score: m.0 }
        });

    let take = rank.min(scored.len());
    if take < scored.len() {
        scored.select_nth_unstable_by(take - 1, |a, b| rank_order(key(a), key(b)));
        scored.truncate(take);
    }
    scored.sort_by(|a, b| rank_order(key(a), key(b)));
    let candidates = scored
        .into_iter()
        .map(|(score, i)| Candidate {
            subject_id: gallery.entries[i].subject_id.clone(),
            sample_id: gallery.entries[i].sample_id.clone(),
            score,
        })
        .collect();
    Ok(SearchOutcome { probe: probe.clone(), candidates, rank_cutoff: rank, mate })
}

/// Searches every probe in parallel; outcomes keep the probe order.
pub fn search_all(
    probes: &[Probe],
    gallery: &Gallery,
    source: &dyn ScoreSource,
    rank: usize,
) -> Result<Vec<SearchOutcome>> {
    probes.par_iter().map(|p| search(p, gallery, source, rank)).collect()
}

/// Fraction of non-mated searches whose best candidate scores `>= threshold`.
///
/// The top candidate is the maximum, so this equals "any candidate at or
/// above threshold".
pub fn fpir(nonmated: &[SearchOutcome], threshold: f64) -> Rate {
    let hits = nonmated.iter().filter(|o| o.top_score().is_some_and(|s| s >= threshold)).count();
    Rate::from_counts(hits as u64, nonmated.len() as u64)
}

fn mate_found(o: &SearchOutcome, rank: usize) -> Option<f64> {
    o.mate.filter(|m| m.rank <= rank).map(|m| m.score)
}

/// Fraction of mated searches whose mate scores below `threshold` or ranks
/// outside the top `rank`.
pub fn fnir(mated: &[SearchOutcome], threshold: f64, rank: usize) -> Rate {
    let misses = mated.iter().filter(|o| mate_found(o, rank).is_none_or(|s| s < threshold)).count();
    Rate::from_counts(misses as u64, mated.len() as u64)
}

/// Closed-set rate: fraction of mated searches with the mate in the top `rank`.
pub fn tpir(mated: &[SearchOutcome], rank: usize) -> Rate {
    let hits = mated.iter().filter(|o| mate_found(o, rank).is_some()).count();
    Rate::from_counts(hits as u64, mated.len() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnirCalibration {
    #[serde(with = "fairprint_stats::serde_float")]
    pub threshold: f64,
    pub target_fnir: f64,
    pub achieved_fnir: f64,
    /// FNIR from rank failures alone.
    pub floor: f64,
    pub n_mated: usize,
}

/// Largest threshold whose FNIR on `mated` stays within `target`.
///
/// Candidates are the observed in-rank mate scores plus `+inf`.
pub fn calibrate_threshold_fnir(mated: &[SearchOutcome], target: f64, rank: usize) -> Result<FnirCalibration> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::Config(format!("target FNIR {target} outside [0, 1]")));
    }
    if mated.is_empty() {
        return Err(Error::Undefined("FNIR calibration needs at least one mated search".into()));
    }
    let n = mated.len();
    let mut found: Vec<f64> = mated.iter().filter_map(|o| mate_found(o, rank)).collect();
    let rank_failures = n - found.len();
    let floor = rank_failures as f64 / n as f64;
    if floor > target {
        return Err(Error::FnirFloor { target, floor });
    }
    found.sort_by(f64::total_cmp);
    // largest number of extra score failures the target allows
    let allowed = (0..=found.len()).rev().find(|j| (rank_failures + j) as f64 / n as f64 <= target).unwrap_or(0);
    let threshold = if allowed >= found.len() { f64::INFINITY } else { found[allowed] };
    let achieved = fnir(mated, threshold, rank).value().expect("mated searches present");
    Ok(FnirCalibration { threshold, target_fnir: target, achieved_fnir: achieved, floor, n_mated: n })
}

/// Bootstrap of an identification rate over searches.
pub fn bootstrap_rate(
    outcomes: &[SearchOutcome],
    group: Option<GroupSelector>,
    metric: Metric,
    threshold: f64,
    rank: usize,
    config: &BootstrapConfig,
) -> Result<BootstrapEstimate> {
    let rate = |sample: &[SearchOutcome]| -> Rate {
        match metric {
            Metric::Fpir => fpir(sample, threshold),
            Metric::Fnir => fnir(sample, threshold, rank),
            Metric::Tpir => tpir(sample, rank),
            Metric::Tmr => Rate::Undefined,
        }
    };
    if metric == Metric::Tmr {
        return Err(Error::Config("TMR is a verification metric".into()));
    }
    let values = bootstrap_values(outcomes.len(), config, |draws| {
        let sample: Vec<SearchOutcome> = draws.iter().map(|&i| outcomes[i].clone()).collect();
        rate(&sample).require(&format!("{metric:?}"))
    })?;
    BootstrapEstimate::from_replicates(group, metric, values, *config)
}

/// One point of an FPIR / FNIR trade-off sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(with = "fairprint_stats::serde_float")]
    pub threshold: f64,
    pub fpir: Rate,
    pub fnir: Rate,
}

/// `n` evenly spaced thresholds spanning the observed scores.
pub fn sweep_grid(outcomes: &[SearchOutcome], n: usize) -> Vec<f64> {
    let scores = outcomes
        .iter()
        .flat_map(|o| o.top_score().into_iter().chain(o.mate.map(|m| m.score)));
    let (lo, hi) = scores.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
    if n == 0 || !lo.is_finite() {
        return Vec::new();
    }
    if n == 1 || lo == hi {
        return vec![lo; n.min(1)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn sweep(nonmated: &[SearchOutcome], mated: &[SearchOutcome], thresholds: &[f64], rank: usize) -> Vec<SweepPoint> {
    thresholds
        .iter()
        .map(|&t| SweepPoint { threshold: t, fpir: fpir(nonmated, t), fnir: fnir(mated, t, rank) })
        .collect()
}
