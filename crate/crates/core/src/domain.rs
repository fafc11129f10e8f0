//! Demographic-labelled comparison scores and verification rates.
//!
//! The match convention everywhere is `score >= threshold`. Genuine (mated)
//! comparisons are attributed to the demographic group of the probe subject.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CANONICAL_RACES: [&str; 2] = ["B", "W"];
pub const CANONICAL_GENDERS: [&str; 2] = ["F", "M"];

/// A trimmed, non-empty, case-sensitive demographic label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label(String);

impl Label {
    pub fn new(raw: &str) -> Result<Self> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(Error::Data("demographic label must be non-empty".into()));
        }
        if trimmed.contains(['/', ':', ',', '*']) {
            return Err(Error::Data(format!("demographic label {trimmed:?} contains a reserved character")));
        }
        Ok(Label(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Label {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Label::new(&s)
    }
}

impl From<Label> for String {
    fn from(l: Label) -> String {
        l.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn canonical_rank(label: &Label, canon: &[&str; 2]) -> usize {
    canon.iter().position(|c| *c == label.as_str()).unwrap_or(canon.len())
}

/// A composite (race, gender) group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DemographicGroup {
    pub race: Label,
    pub gender: Label,
}

impl DemographicGroup {
    pub fn new(race: &str, gender: &str) -> Result<Self> {
        Ok(Self { race: Label::new(race)?, gender: Label::new(gender)? })
    }

    pub fn is_canonical(&self) -> bool {
        CANONICAL_RACES.contains(&self.race.as_str()) && CANONICAL_GENDERS.contains(&self.gender.as_str())
    }

    /// The four canonical composites in report order: BF, BM, WF, WM.
    pub fn canonical() -> Vec<DemographicGroup> {
        CANONICAL_RACES
            .iter()
            .flat_map(|r| CANONICAL_GENDERS.iter().map(move |g| DemographicGroup::new(r, g).unwrap()))
            .collect()
    }

    /// Short code usable in identifiers: `BF` for canonical groups,
    /// `race_gender` otherwise.
    pub fn code(&self) -> String {
        if self.is_canonical() {
            format!("{}{}", self.race, self.gender)
        } else {
            format!("{}_{}", self.race, self.gender)
        }
    }

    fn sort_key(&self) -> (usize, usize, &str, &str) {
        (
            canonical_rank(&self.race, &CANONICAL_RACES),
            canonical_rank(&self.gender, &CANONICAL_GENDERS),
            self.race.as_str(),
            self.gender.as_str(),
        )
    }
}

impl Ord for DemographicGroup {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for DemographicGroup {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for DemographicGroup {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        if self.is_canonical() {
            write!(f, "{}{}", self.race, self.gender)
        } else {
            write!(f, "{}/{}", self.race, self.gender)
        }
    }
}

/// A composite group or a marginal aggregation of composites.
///
/// Text form: `BF`, `B`, `F` for canonical labels; `race/gender`, `race/*`
/// and `*/gender` in general.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GroupSelector {
    Composite(DemographicGroup),
    Race(Label),
    Gender(Label),
}

impl GroupSelector {
    pub fn matches(&self, group: &DemographicGroup) -> bool {
        match self {
            GroupSelector::Composite(g) => g == group,
            GroupSelector::Race(r) => &group.race == r,
            GroupSelector::Gender(g) => &group.gender == g,
        }
    }

    pub fn composite(&self) -> Option<&DemographicGroup> {
        match self {
            GroupSelector::Composite(g) => Some(g),
            _ => None,
        }
    }

    /// The four canonical composites followed by the B, W, F, M marginals.
    pub fn canonical_with_marginals() -> Vec<GroupSelector> {
        let mut out: Vec<_> = DemographicGroup::canonical().into_iter().map(GroupSelector::Composite).collect();
        out.extend(CANONICAL_RACES.iter().map(|r| GroupSelector::Race(Label::new(r).unwrap())));
        out.extend(CANONICAL_GENDERS.iter().map(|g| GroupSelector::Gender(Label::new(g).unwrap())));
        out
    }

    fn sort_key(&self) -> (usize, usize, usize, String) {
        match self {
            GroupSelector::Composite(g) => {
                let (a, b, _, _) = g.sort_key();
                (0, a, b, g.to_string())
            }
            GroupSelector::Race(r) => (1, canonical_rank(r, &CANONICAL_RACES), 0, r.to_string()),
            GroupSelector::Gender(g) => (2, canonical_rank(g, &CANONICAL_GENDERS), 0, g.to_string()),
        }
    }
}

impl Ord for GroupSelector {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for GroupSelector {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GroupSelector {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            GroupSelector::Composite(g) => write!(f, "{g}"),
            GroupSelector::Race(r) if CANONICAL_RACES.contains(&r.as_str()) => write!(f, "{r}"),
            GroupSelector::Race(r) => write!(f, "{r}/*"),
            GroupSelector::Gender(g) if CANONICAL_GENDERS.contains(&g.as_str()) => write!(f, "{g}"),
            GroupSelector::Gender(g) => write!(f, "*/{g}"),
        }
    }
}

impl FromStr for GroupSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((race, gender)) = s.split_once('/') {
            return match (race.trim(), gender.trim()) {
                ("*", "*") => Err(Error::Config(format!("group {s:?} selects nothing specific"))),
                ("*", g) => Ok(GroupSelector::Gender(Label::new(g)?)),
                (r, "*") => Ok(GroupSelector::Race(Label::new(r)?)),
                (r, g) => Ok(GroupSelector::Composite(DemographicGroup::new(r, g)?)),
            };
        }
        if CANONICAL_RACES.contains(&s) {
            return Ok(GroupSelector::Race(Label::new(s)?));
        }
        if CANONICAL_GENDERS.contains(&s) {
            return Ok(GroupSelector::Gender(Label::new(s)?));
        }
        let mut chars = s.chars();
        if let (Some(r), Some(g), None) = (chars.next(), chars.next(), chars.next()) {
            let (r, g) = (r.to_string(), g.to_string());
            if CANONICAL_RACES.contains(&r.as_str()) && CANONICAL_GENDERS.contains(&g.as_str()) {
                return Ok(GroupSelector::Composite(DemographicGroup::new(&r, &g)?));
            }
        }
        Err(Error::Config(format!(
            "unrecognised group {s:?}: use BF/BM/WF/WM, B/W/F/M, race/gender, race/* or */gender"
        )))
    }
}

impl TryFrom<String> for GroupSelector {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GroupSelector> for String {
    fn from(g: GroupSelector) -> String {
        g.to_string()
    }
}

/// Parses `A:B` into a pair of selectors.
pub fn parse_pair(s: &str) -> Result<(GroupSelector, GroupSelector)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("pair {s:?} must look like WF:WM")))?;
    Ok((a.parse()?, b.parse()?))
}

/// The six pairwise comparisons tested by default: WF:WM, BF:BM, WM:BM,
/// WF:BF, F:M, B:W.
pub fn default_pairs() -> Vec<(GroupSelector, GroupSelector)> {
    ["WF:WM", "BF:BM", "WM:BM", "WF:BF", "F:M", "B:W"]
        .iter()
        .map(|p| parse_pair(p).unwrap())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub group: DemographicGroup,
}

/// Subjects indexed by id; ids are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubjectTable {
    records: Vec<SubjectRecord>,
    index: HashMap<String, usize>,
}

impl SubjectTable {
    pub fn new(records: Vec<SubjectRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.subject_id.is_empty() {
                return Err(Error::Data(format!("subject #{i} has an empty id")));
            }
            if index.insert(r.subject_id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate subject id {:?}", r.subject_id)));
            }
        }
        Ok(Self { records, index })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn index_of(&self, subject_id: &str) -> Option<usize> {
        self.index.get(subject_id).copied()
    }

    pub fn get(&self, subject_id: &str) -> Option<&SubjectRecord> {
        self.index_of(subject_id).map(|i| &self.records[i])
    }

    pub fn group_of(&self, subject_id: &str) -> Option<&DemographicGroup> {
        self.get(subject_id).map(|r| &r.group)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub probe_subject: String,
    pub probe_sample: String,
    pub gallery_subject: String,
    pub gallery_sample: String,
    pub score: f64,
    pub mated: bool,
}

impl ComparisonRecord {
    /// Builds a record, deriving `mated` from subject equality.
    pub fn new(
        probe_subject: impl Into<String>,
        probe_sample: impl Into<String>,
        gallery_subject: impl Into<String>,
        gallery_sample: impl Into<String>,
        score: f64,
    ) -> Result<Self> {
        let rec = Self {
            probe_subject: probe_subject.into(),
            probe_sample: probe_sample.into(),
            gallery_subject: gallery_subject.into(),
            gallery_sample: gallery_sample.into(),
            score,
            mated: false,
        };
        let mated = rec.probe_subject == rec.gallery_subject;
        let rec = Self { mated, ..rec };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.score.is_finite() {
            return Err(Error::Data(format!("score {} is not finite", self.score)));
        }
        if self.mated != (self.probe_subject == self.gallery_subject) {
            return Err(Error::Data(format!(
                "mated flag {} inconsistent with subjects {:?} / {:?}",
                self.mated, self.probe_subject, self.gallery_subject
            )));
        }
        if self.mated && self.probe_sample == self.gallery_sample {
            return Err(Error::Data(format!("self-comparison of sample {:?}", self.probe_sample)));
        }
        Ok(())
    }
}

/// Comparison scores with the subject table they reference.
///
/// The subject table is shared between a set and every subset derived from it
/// (partitions, bootstrap replicates).
#[derive(Debug, Clone)]
pub struct ScoreSet {
    subjects: Arc<SubjectTable>,
    comparisons: Vec<ComparisonRecord>,
    probe_index: Vec<usize>,
}

impl ScoreSet {
    pub fn new(subjects: SubjectTable, comparisons: Vec<ComparisonRecord>) -> Result<Self> {
        Self::with_shared(Arc::new(subjects), comparisons)
    }

    pub fn with_shared(subjects: Arc<SubjectTable>, comparisons: Vec<ComparisonRecord>) -> Result<Self> {
        let mut probe_index = Vec::with_capacity(comparisons.len());
        for (i, c) in comparisons.iter().enumerate() {
            c.validate().map_err(|e| e.context(format!("comparison #{i}")))?;
            let p = subjects
                .index_of(&c.probe_subject)
                .ok_or_else(|| Error::Data(format!("comparison #{i}: unknown probe subject {:?}", c.probe_subject)))?;
            if subjects.index_of(&c.gallery_subject).is_none() {
                return Err(Error::Data(format!(
                    "comparison #{i}: unknown gallery subject {:?}",
                    c.gallery_subject
                )));
            }
            probe_index.push(p);
        }
        Ok(Self { subjects, comparisons, probe_index })
    }

    /// Subset of `self` given by comparison indices (repeats allowed).
    pub(crate) fn select(&self, indices: impl IntoIterator<Item = usize>) -> ScoreSet {
        let mut comparisons = Vec::new();
        let mut probe_index = Vec::new();
        for i in indices {
            comparisons.push(self.comparisons[i].clone());
            probe_index.push(self.probe_index[i]);
        }
        ScoreSet { subjects: Arc::clone(&self.subjects), comparisons, probe_index }
    }

    pub fn subjects(&self) -> &SubjectTable {
        &self.subjects
    }

    pub fn shared_subjects(&self) -> Arc<SubjectTable> {
        Arc::clone(&self.subjects)
    }

    pub fn comparisons(&self) -> &[ComparisonRecord] {
        &self.comparisons
    }

    /// Subject-table index of each comparison's probe subject.
    pub fn probe_indices(&self) -> &[usize] {
        &self.probe_index
    }

    pub fn len(&self) -> usize {
        self.comparisons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comparisons.is_empty()
    }

    pub fn probe_group(&self, i: usize) -> &DemographicGroup {
        &self.subjects.records()[self.probe_index[i]].group
    }

    pub fn genuine_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.comparisons.iter().filter(|c| c.mated).map(|c| c.score)
    }

    pub fn impostor_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.comparisons.iter().filter(|c| !c.mated).map(|c| c.score)
    }

    pub fn genuine_count(&self) -> usize {
        self.comparisons.iter().filter(|c| c.mated).count()
    }

    /// Distinct probe subjects (subject-table indices), ascending.
    pub fn probe_subjects(&self) -> Vec<usize> {
        let mut v = self.probe_index.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Comparisons whose probe group satisfies `keep`.
    pub fn filter_groups(&self, keep: impl Fn(&DemographicGroup) -> bool) -> ScoreSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.probe_group(i))).collect();
        self.select(idx)
    }

    pub fn for_selector(&self, selector: &GroupSelector) -> ScoreSet {
        self.filter_groups(|g| g.is_canonical() && selector.matches(g))
    }

    /// Copy with replaced scores for the given comparison indices.
    pub fn with_scores(&self, updates: &[(usize, f64)]) -> Result<ScoreSet> {
        let mut out = self.clone();
        for &(i, s) in updates {
            if !s.is_finite() {
                return Err(Error::Data(format!("replacement score {s} is not finite")));
            }
            out.comparisons
                .get_mut(i)
                .ok_or_else(|| Error::Data(format!("comparison index {i} out of range")))?
                .score = s;
        }
        Ok(out)
    }
}

/// A rate with an explicit "no denominator" state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "Option<f64>", into = "Option<f64>")]
pub enum Rate {
    Defined(f64),
    Undefined,
}

impl Rate {
    pub fn from_counts(hits: u64, total: u64) -> Rate {
        if total == 0 {
            Rate::Undefined
        } else {
            Rate::Defined(hits as f64 / total as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Rate::Defined(v) => Some(v),
            Rate::Undefined => None,
        }
    }

    pub fn require(self, what: &str) -> Result<f64> {
        self.value().ok_or_else(|| Error::Undefined(format!("{what} has no denominator")))
    }
}

impl From<Option<f64>> for Rate {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Rate::Undefined, Rate::Defined)
    }
}

impl From<Rate> for Option<f64> {
    fn from(r: Rate) -> Self {
        r.value()
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            Rate::Defined(v) => write!(f, "{v}"),
            Rate::Undefined => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    #[serde(with = "fairprint_stats::serde_float")]
    pub threshold: f64,
    pub tmr: Rate,
    pub fnmr: Rate,
    pub fmr: Rate,
    pub n_genuine: u64,
    pub n_impostor: u64,
    pub genuine_accepted: u64,
    pub impostor_accepted: u64,
}

impl RatePoint {
    fn from_counts(threshold: f64, genuine_accepted: u64, n_genuine: u64, impostor_accepted: u64, n_impostor: u64) -> Self {
        let tmr = Rate::from_counts(genuine_accepted, n_genuine);
        let fnmr = Rate::from_counts(n_genuine - genuine_accepted, n_genuine);
        Self {
            threshold,
            tmr,
            fnmr,
            fmr: Rate::from_counts(impostor_accepted, n_impostor),
            n_genuine,
            n_impostor,
            genuine_accepted,
            impostor_accepted,
        }
    }
}

/// TMR, FNMR and FMR at `threshold`; a side with no comparisons is undefined.
pub fn verification_rates(scores: &ScoreSet, threshold: f64) -> Result<RatePoint> {
    if scores.is_empty() {
        return Err(Error::EmptyScoreSet);
    }
    let (mut ng, mut ga, mut ni, mut ia) = (0u64, 0u64, 0u64, 0u64);
    for c in scores.comparisons() {
        let accepted = (c.score >= threshold) as u64;
        if c.mated {
            ng += 1;
            ga += accepted;
        } else {
            ni += 1;
            ia += accepted;
        }
    }
    Ok(RatePoint::from_counts(threshold, ga, ng, ia, ni))
}

/// Smallest representable value strictly above `x`.
pub fn step_above(x: f64) -> f64 {
    x.next_up()
}

/// Empirical ROC: one point per distinct observed score, preceded by a
/// sentinel just above the maximum (tmr = fmr = 0). Thresholds descend; the
/// final point sits at the global minimum where tmr = fmr = 1.
pub fn roc_curve(scores: &ScoreSet) -> Result<Vec<RatePoint>> {
    let mut genuine: Vec<f64> = scores.genuine_scores().collect();
    let mut impostor: Vec<f64> = scores.impostor_scores().collect();
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::Data(format!(
            "ROC needs both sides: {} genuine, {} impostor comparisons",
            genuine.len(),
            impostor.len()
        )));
    }
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = genuine.iter().chain(impostor.iter()).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds.insert(0, step_above(thresholds[0]));

    let (ng, ni) = (genuine.len() as u64, impostor.len() as u64);
    let at_or_above = |sorted: &[f64], t: f64| (sorted.len() - sorted.partition_point(|&s| s < t)) as u64;
    Ok(thresholds
        .into_iter()
        .map(|t| RatePoint::from_counts(t, at_or_above(&genuine, t), ng, at_or_above(&impostor, t), ni))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmrCalibration {
    #[serde(with = "fairprint_stats::serde_float")]
    pub threshold: f64,
    pub target_fmr: f64,
    pub achieved_fmr: f64,
    pub n_impostor: u64,
}

/// Smallest threshold among the observed impostor scores (plus a sentinel
/// just above the maximum) whose FMR does not exceed `target_fmr`.
pub fn calibrate_threshold_fmr(impostor_scores: &[f64], target_fmr: f64) -> Result<FmrCalibration> {
    if impostor_scores.is_empty() {
        return Err(Error::Data("FMR calibration needs at least one impostor score".into()));
    }
    if !(target_fmr > 0.0 && target_fmr < 1.0) {
        return Err(Error::Config(format!("target FMR must lie in (0,1), got {target_fmr}")));
    }
    if let Some(bad) = impostor_scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Data(format!("impostor score {bad} is not finite")));
    }
    let mut sorted = impostor_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut i = 0;
    while i < n {
        let fmr = (n - i) as f64 / n as f64;
        if fmr <= target_fmr {
            return Ok(FmrCalibration { threshold: sorted[i], target_fmr, achieved_fmr: fmr, n_impostor: n as u64 });
        }
        // skip ties: they move together
        let v = sorted[i];
        while i < n && sorted[i] == v {
            i += 1;
        }
    }
    Ok(FmrCalibration {
        threshold: step_above(sorted[n - 1]),
        target_fmr,
        achieved_fmr: 0.0,
        n_impostor: n as u64,
    })
}

/// Comparisons split by the probe subject's canonical composite group.
#[derive(Debug, Clone)]
pub struct GroupPartition {
    pub groups: BTreeMap<GroupSelector, ScoreSet>,
    /// Comparisons whose probe subject is not in a canonical group.
    pub unlabeled: ScoreSet,
}

pub fn partition_by_group(scores: &ScoreSet, marginals: bool) -> GroupPartition {
    let mut buckets: BTreeMap<DemographicGroup, Vec<usize>> = BTreeMap::new();
    let mut unlabeled = Vec::new();
    for i in 0..scores.len() {
        let g = scores.probe_group(i);
        if g.is_canonical() {
            buckets.entry(g.clone()).or_default().push(i);
        } else {
            unlabeled.push(i);
        }
    }
    let mut groups = BTreeMap::new();
    if marginals {
        for sel in GroupSelector::canonical_with_marginals().into_iter().filter(|s| s.composite().is_none()) {
            let mut idx: Vec<usize> = buckets
                .iter()
                .filter(|(g, _)| sel.matches(g))
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            if !idx.is_empty() {
                idx.sort_unstable();
                groups.insert(sel, scores.select(idx));
            }
        }
    }
    for (g, idx) in buckets {
        groups.insert(GroupSelector::Composite(g), scores.select(idx));
    }
    GroupPartition { groups, unlabeled: scores.select(unlabeled) }
}
