//! Synthetic score sets, quality scores and embeddings with per-group score
//! laws and sample-level outliers.
//!
//! Every random quantity comes from a stream derived from the seed, the group
//! code, the subject index and a purpose tag, so a dataset is reproducible
//! from its [`Provenance`] regardless of how groups are scheduled.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fairprint_stats::normal_cdf;

use crate::domain::{ComparisonRecord, DemographicGroup, ScoreSet, SubjectRecord, SubjectTable};
use crate::error::{Error, Result};
use crate::openset::{EmbeddingRecord, EmbeddingStore};
use crate::rng::Stream;

pub const QUALITY_RANGE: (f64, f64) = (0.0, 100.0);

/// Smallest probability mass a truncation window may hold.
const MIN_WINDOW_MASS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub const fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }

    fn window_mass(&self, lo: f64, hi: f64) -> f64 {
        if self.std == 0.0 {
            return if (lo..=hi).contains(&self.mean) { 1.0 } else { 0.0 };
        }
        normal_cdf((hi - self.mean) / self.std) - normal_cdf((lo - self.mean) / self.std)
    }

    /// Draw from the law restricted to `[lo, hi]` by rejection.
    fn sample_truncated(&self, stream: &mut Stream, lo: f64, hi: f64) -> f64 {
        if self.std == 0.0 {
            return self.mean;
        }
        loop {
            let x = self.mean + self.std * stream.normal();
            if (lo..=hi).contains(&x) {
                return x;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScoreModel {
    pub group: DemographicGroup,
    pub n_subjects: usize,
    pub samples_per_subject: usize,
    /// Inclusive score bounds for every drawn score.
    pub score_range: (f64, f64),
    pub genuine: Gaussian,
    pub impostor: Gaussian,
    /// Probability that a sample is an outlier.
    pub outlier_fraction: f64,
    /// Genuine law for comparisons whose probe sample is an outlier.
    pub outlier_genuine: Gaussian,
    pub quality: Gaussian,
    /// Quality law for outlier samples when `quality_outlier_link` is set.
    pub outlier_quality: Gaussian,
    pub quality_outlier_link: bool,
    /// Non-mated comparisons drawn per probe subject.
    pub impostors_per_subject: usize,
    /// Spread of a sample's embedding around its subject centroid.
    pub embedding_noise: f64,
    /// Expected cosine similarity between centroids of two subjects of this
    /// group; raises within-group impostor similarity in embedding space.
    #[serde(default)]
    pub group_cohesion: f64,
}

impl GroupScoreModel {
    /// Documented defaults on a `[0, 1]` similarity scale.
    pub fn with_defaults(group: DemographicGroup) -> Self {
        Self {
            group,
            n_subjects: 200,
            samples_per_subject: 3,
            score_range: (0.0, 1.0),
            genuine: Gaussian::new(0.75, 0.08),
            impostor: Gaussian::new(0.30, 0.08),
            outlier_fraction: 0.01,
            outlier_genuine: Gaussian::new(0.20, 0.10),
            quality: Gaussian::new(60.0, 15.0),
            outlier_quality: Gaussian::new(25.0, 10.0),
            quality_outlier_link: true,
            impostors_per_subject: 4,
            embedding_noise: 1.0,
            group_cohesion: 0.4,
        }
    }

    /// Field-level problems, empty when the model is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let code = self.group.code();
        let (lo, hi) = self.score_range;
        if self.n_subjects < 2 {
            p.push(format!("{code}.n_subjects must be >= 2"));
        }
        if self.samples_per_subject < 2 {
            p.push(format!("{code}.samples_per_subject must be >= 2"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            p.push(format!("{code}.score_range must be finite and ordered"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            p.push(format!("{code}.outlier_fraction must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.group_cohesion) {
            p.push(format!("{code}.group_cohesion must lie in [0, 1)"));
        }
        if !(self.embedding_noise.is_finite() && self.embedding_noise >= 0.0) {
            p.push(format!("{code}.embedding_noise must be finite and >= 0"));
        }
        let laws = [
            ("genuine", self.genuine, (lo, hi)),
            ("impostor", self.impostor, (lo, hi)),
            ("outlier_genuine", self.outlier_genuine, (lo, hi)),
            ("quality", self.quality, QUALITY_RANGE),
            ("outlier_quality", self.outlier_quality, QUALITY_RANGE),
        ];
        for (name, law, (a, b)) in laws {
            if !(law.mean.is_finite() && law.std.is_finite() && law.std >= 0.0) {
                p.push(format!("{code}.{name} needs a finite mean and non-negative std"));
            } else if a < b && law.window_mass(a, b) < MIN_WINDOW_MASS {
                p.push(format!("{code}.{name} puts almost no mass inside [{a}, {b}]"));
            }
        }
        p
    }
}

pub const PRESETS: [&str; 3] = ["identical", "differential", "outliers"];

/// Named model sets over the four canonical groups.
///
/// * `identical`: every group shares the default laws.
/// * `differential`: the genuine mean of black subjects sits one default
///   genuine std below that of white subjects, and their embeddings are
///   more tightly clustered.
/// * `outliers`: identical laws, with 5% of BF samples drawn as outliers.
pub fn preset(name: &str, n_subjects: usize) -> Result<Vec<GroupScoreModel>> {
    let mut models: Vec<GroupScoreModel> = DemographicGroup::canonical()
        .into_iter()
        .map(|g| GroupScoreModel { n_subjects, ..GroupScoreModel::with_defaults(g) })
        .collect();
    match name {
        "identical" => {}
        "differential" => {
            for m in models.iter_mut().filter(|m| m.group.race.as_str() == "B") {
                m.genuine.mean -= m.genuine.std;
                m.group_cohesion = 0.5;
            }
        }
        "outliers" => {
            for m in models.iter_mut().filter(|m| m.group.code() == "BF") {
                m.outlier_fraction = 0.05;
            }
        }
        other => {
            return Err(Error::Config(format!("unknown preset {other:?}; choose one of {}", PRESETS.join(", "))))
        }
    }
    Ok(models)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub models: Vec<GroupScoreModel>,
}

impl Provenance {
    pub fn new(models: Vec<GroupScoreModel>, seed: u64) -> Self {
        Self { generator: concat!("fairprint-synth ", env!("CARGO_PKG_VERSION")).to_string(), seed, models }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub score_set: ScoreSet,
    pub quality: BTreeMap<String, f64>,
    pub outlier_samples: BTreeSet<String>,
    pub provenance: Provenance,
}

fn validate(models: &[GroupScoreModel]) -> Result<()> {
    if models.is_empty() {
        return Err(Error::Config("at least one group model is required".into()));
    }
    let mut problems: Vec<String> = models.iter().flat_map(|m| m.problems()).collect();
    let mut seen = BTreeSet::new();
    for m in models {
        if !seen.insert(&m.group) {
            problems.push(format!("group {} is modelled twice", m.group));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("invalid synthetic model: {}", problems.join("; "))))
    }
}

pub fn subject_id(group: &DemographicGroup, i: usize) -> String {
    format!("{}-{i:05}", group.code())
}

pub fn sample_id(subject: &str, j: usize) -> String {
    format!("{subject}-s{j}")
}

/// Per-sample outlier flags and quality scores of one subject.
struct SubjectSamples {
    id: String,
    outlier: Vec<bool>,
    quality: Vec<f64>,
}

fn subject_samples(model: &GroupScoreModel, group_stream: &Stream, i: usize) -> SubjectSamples {
    let id = subject_id(&model.group, i);
    let mut s = group_stream.derive(i as u64).derive_str("samples");
    let mut outlier = Vec::with_capacity(model.samples_per_subject);
    let mut quality = Vec::with_capacity(model.samples_per_subject);
    for _ in 0..model.samples_per_subject {
        let o = s.bernoulli(model.outlier_fraction);
        let law = if o && model.quality_outlier_link { model.outlier_quality } else { model.quality };
        outlier.push(o);
        quality.push(law.sample_truncated(&mut s, QUALITY_RANGE.0, QUALITY_RANGE.1));
    }
    SubjectSamples { id, outlier, quality }
}

/// Generates a score set with quality scores.
///
/// Mated comparisons cover every ordered sample pair `(i < j)` of a subject,
/// with sample `j` as the probe; an outlier probe draws from the outlier law.
/// Non-mated comparisons pair each subject with randomly chosen other subjects
/// across all groups, without repeating a sample pair.
pub fn generate(models: &[GroupScoreModel], seed: u64) -> Result<SynthDataset> {
    validate(models)?;
    let root = Stream::new(seed);
    let streams: Vec<Stream> = models.iter().map(|m| root.derive_str(&m.group.code())).collect();

    let all_subjects: Vec<(usize, usize)> = models
        .iter()
        .enumerate()
        .flat_map(|(g, m)| (0..m.n_subjects).map(move |i| (g, i)))
        .collect();
    if all_subjects.len() < 2 {
        return Err(Error::Config("need at least two subjects overall".into()));
    }

    let per_group: Vec<(Vec<SubjectRecord>, Vec<ComparisonRecord>, Vec<(String, f64, bool)>)> = models
        .par_iter()
        .enumerate()
        .map(|(g, model)| {
            let (lo, hi) = model.score_range;
            let mut subjects = Vec::new();
            let mut comps = Vec::new();
            let mut samples = Vec::new();
            let offset: usize = models[..g].iter().map(|m| m.n_subjects).sum();
            for i in 0..model.n_subjects {
                let ss = subject_samples(model, &streams[g], i);
                subjects.push(SubjectRecord { subject_id: ss.id.clone(), group: model.group.clone() });
                let sub = streams[g].derive(i as u64);

                let mut gen = sub.derive_str("genuine");
                for j in 1..model.samples_per_subject {
                    for k in 0..j {
                        let law = if ss.outlier[j] { model.outlier_genuine } else { model.genuine };
                        let score = law.sample_truncated(&mut gen, lo, hi);
                        comps.push(
                            ComparisonRecord::new(&ss.id, sample_id(&ss.id, j), &ss.id, sample_id(&ss.id, k), score)
                                .expect("generated genuine comparison is valid"),
                        );
                    }
                }

                let mut imp = sub.derive_str("impostor");
                let me = offset + i;
                let mut used = HashSet::new();
                let mut attempts = 0;
                while used.len() < model.impostors_per_subject && attempts < 8 * model.impostors_per_subject {
                    attempts += 1;
                    let mut other = imp.below(all_subjects.len() - 1);
                    if other >= me {
                        other += 1;
                    }
                    let (og, oi) = all_subjects[other];
                    let other_model = &models[og];
                    let pj = imp.below(model.samples_per_subject);
                    let gj = imp.below(other_model.samples_per_subject);
                    let score = model.impostor.sample_truncated(&mut imp, lo, hi);
                    if used.insert((other, pj, gj)) {
                        let oid = subject_id(&other_model.group, oi);
                        comps.push(
                            ComparisonRecord::new(&ss.id, sample_id(&ss.id, pj), &oid, sample_id(&oid, gj), score)
                                .expect("generated impostor comparison is valid"),
                        );
                    }
                }

                for (j, (&q, &o)) in ss.quality.iter().zip(&ss.outlier).enumerate() {
                    samples.push((sample_id(&ss.id, j), q, o));
                }
            }
            (subjects, comps, samples)
        })
        .collect();

    let mut subjects = Vec::new();
    let mut comparisons = Vec::new();
    let mut quality = BTreeMap::new();
    let mut outlier_samples = BTreeSet::new();
    for (s, c, q) in per_group {
        subjects.extend(s);
        comparisons.extend(c);
        for (id, value, outlier) in q {
            if outlier {
                outlier_samples.insert(id.clone());
            }
            quality.insert(id, value);
        }
    }
    let score_set = ScoreSet::new(SubjectTable::new(subjects)?, comparisons)?;
    Ok(SynthDataset { score_set, quality, outlier_samples, provenance: Provenance::new(models.to_vec(), seed) })
}

/// Regenerates a dataset from its provenance record.
pub fn regenerate(provenance: &Provenance) -> Result<SynthDataset> {
    generate(&provenance.models, provenance.seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    /// Noise scale for outlier samples.
    pub outlier_noise: f64,
    /// Unlabelled single-sample identities, named `D-000000`, ...
    pub distractors: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { dim: 192, outlier_noise: 4.0, distractors: 1000 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthEmbeddings {
    pub store: EmbeddingStore,
    /// Labelled subjects only; distractors carry no demographic label.
    pub subjects: SubjectTable,
    pub distractor_subjects: Vec<String>,
    pub outlier_samples: BTreeSet<String>,
    pub provenance: Provenance,
}

fn unit_vector(stream: &mut Stream, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| stream.normal()).collect();
        if norm(&v) > 1e-12 {
            return normalized(v);
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Unit-norm embeddings: each subject has a random centroid on the sphere,
/// pulled towards a shared group direction by `group_cohesion`, and
/// each sample is the normalized centroid plus isotropic noise of total
/// scale `embedding_noise` (or `outlier_noise` for outlier samples).
/// Outlier status and sample ids match [`generate`] for the same seed.
pub fn generate_embeddings(models: &[GroupScoreModel], seed: u64, config: EmbeddingConfig) -> Result<SynthEmbeddings> {
    if config.dim < 2 {
        return Err(Error::Config(format!("embedding dimension must be >= 2, got {}", config.dim)));
    }
    if !(config.outlier_noise.is_finite() && config.outlier_noise >= 0.0) {
        return Err(Error::Config("outlier_noise must be finite and >= 0".into()));
    }
    validate(models)?;
    let root = Stream::new(seed);
    let dim = config.dim;
    let per_dim = 1.0 / (dim as f64).sqrt();

    let groups: Vec<(Vec<SubjectRecord>, Vec<EmbeddingRecord>, Vec<String>)> = models
        .par_iter()
        .map(|model| {
            let gs = root.derive_str(&model.group.code());
            let direction = unit_vector(&mut gs.derive_str("group-direction"), dim);
            let (own, shared) = ((1.0 - model.group_cohesion).sqrt(), model.group_cohesion.sqrt());
            let mut subjects = Vec::new();
            let mut records = Vec::new();
            let mut outliers = Vec::new();
            for i in 0..model.n_subjects {
                let ss = subject_samples(model, &gs, i);
                let mut es = gs.derive(i as u64).derive_str("embedding");
                let u = unit_vector(&mut es, dim);
                let centroid = normalized(u.iter().zip(&direction).map(|(a, d)| own * a + shared * d).collect());
                for (j, &o) in ss.outlier.iter().enumerate() {
                    let scale = per_dim * if o { config.outlier_noise } else { model.embedding_noise };
                    let v: Vec<f64> = centroid.iter().map(|c| c + scale * es.normal()).collect();
                    let id = sample_id(&ss.id, j);
                    if o {
                        outliers.push(id.clone());
                    }
                    records.push(EmbeddingRecord { sample_id: id, subject_id: ss.id.clone(), vec: normalized(v) });
                }
                subjects.push(SubjectRecord { subject_id: ss.id, group: model.group.clone() });
            }
            (subjects, records, outliers)
        })
        .collect();

    let mut subjects = Vec::new();
    let mut records = Vec::new();
    let mut outlier_samples = BTreeSet::new();
    for (s, r, o) in groups {
        subjects.extend(s);
        records.extend(r);
        outlier_samples.extend(o);
    }
    let ds = root.derive_str("distractors");
    let mut distractor_subjects = Vec::with_capacity(config.distractors);
    for i in 0..config.distractors {
        let mut s = ds.derive(i as u64);
        let subject = format!("D{i:06}");
        records.push(EmbeddingRecord {
            sample_id: format!("D-{i:06}"),
            subject_id: subject.clone(),
            vec: unit_vector(&mut s, dim),
        });
        distractor_subjects.push(subject);
    }
    Ok(SynthEmbeddings {
        store: EmbeddingStore::new(records)?,
        subjects: SubjectTable::new(subjects)?,
        distractor_subjects,
        outlier_samples,
        provenance: Provenance::new(models.to_vec(), seed),
    })
}
