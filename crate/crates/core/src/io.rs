//! File formats: subjects, scores, quality and summaries as CSV, embeddings as
//! JSON lines. Readers report errors by file, line and column; writers emit
//! the same formats so every file round-trips.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fairprint_stats::{GroupSummary, RateUnit};

use crate::domain::{ComparisonRecord, DemographicGroup, GroupSelector, ScoreSet, SubjectRecord, SubjectTable};
use crate::error::{Error, Result};
use crate::openset::{EmbeddingRecord, EmbeddingStore, ScoreTable};

pub const SUBJECT_COLUMNS: [&str; 3] = ["subject_id", "race", "gender"];
pub const SCORE_COLUMNS: [&str; 5] = ["probe_subject", "probe_sample", "gallery_subject", "gallery_sample", "score"];
/// Optional; when present it must agree with subject equality.
pub const MATED_COLUMN: &str = "mated";
pub const QUALITY_COLUMNS: [&str; 2] = ["sample_id", "quality"];
pub const SUMMARY_COLUMNS: [&str; 4] = ["group", "mean", "std", "m"];
pub const UNIT_COLUMN: &str = "unit";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileFingerprint {
    /// File name without directories, so reports do not depend on where
    /// inputs live.
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
    pub rows: u64,
    pub rejected: u64,
}

fn fingerprint(name: &str, bytes: &[u8], rows: u64, rejected: u64) -> FileFingerprint {
    FileFingerprint {
        name: name.to_string(),
        sha256: hex::encode(Sha256::digest(bytes)),
        bytes: bytes.len() as u64,
        rows,
        rejected,
    }
}

fn display_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parsed CSV rows with a header-name to column-index map.
struct Table {
    file: String,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn parse(file: &str, bytes: &[u8], required: &[&str], optional: &[&str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(bytes);
        let header = reader.headers().map_err(|e| csv_error(file, e))?.clone();
        let mut columns = HashMap::new();
        for (i, name) in header.iter().enumerate() {
            let name = name.trim_start_matches('\u{feff}');
            if !required.contains(&name) && !optional.contains(&name) {
                return Err(parse_error(file, 1, i + 1, format!("unknown column {name:?}")));
            }
            if columns.insert(name.to_string(), i).is_some() {
                return Err(parse_error(file, 1, i + 1, format!("duplicate column {name:?}")));
            }
        }
        for name in required {
            if !columns.contains_key(*name) {
                return Err(parse_error(file, 1, 1, format!("missing column {name:?}")));
            }
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(file, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self { file: file.to_string(), columns, rows })
    }

    fn field<'a>(&self, rec: &'a csv::StringRecord, line: u64, name: &str) -> Result<(&'a str, usize)> {
        let i = self.columns[name];
        let v = rec.get(i).unwrap_or("");
        if v.is_empty() {
            return Err(parse_error(&self.file, line, i + 1, format!("empty {name}")));
        }
        Ok((v, i + 1))
    }

    fn optional<'a>(&self, rec: &'a csv::StringRecord, name: &str) -> Option<(&'a str, usize)> {
        self.columns.get(name).map(|&i| (rec.get(i).unwrap_or(""), i + 1))
    }

    fn real(&self, rec: &csv::StringRecord, line: u64, name: &str) -> Result<f64> {
        let (v, col) = self.field(rec, line, name)?;
        let x: f64 = v
            .parse()
            .map_err(|_| parse_error(&self.file, line, col, format!("{name} {v:?} is not a number")))?;
        if !x.is_finite() {
            return Err(parse_error(&self.file, line, col, format!("{name} {v:?} is not finite")));
        }
        Ok(x)
    }
}

fn parse_error(file: &str, line: u64, column: usize, message: String) -> Error {
    Error::Parse { file: file.to_string(), line, column, message }
}

fn csv_error(file: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    let column = match e.kind() {
        csv::ErrorKind::UnequalLengths { len, .. } => *len as usize,
        _ => 0,
    };
    parse_error(file, line, column, e.to_string())
}

/// Row-level failure that permissive mode skips instead of aborting on.
fn row_error(e: Error, file: &str, line: u64, column: usize) -> Error {
    match e {
        Error::Parse { .. } => e,
        other => parse_error(file, line, column, other.to_string()),
    }
}

pub fn parse_subjects(file: &str, bytes: &[u8]) -> Result<(SubjectTable, FileFingerprint)> {
    let t = Table::parse(file, bytes, &SUBJECT_COLUMNS, &[])?;
    let mut records = Vec::with_capacity(t.rows.len());
    let mut seen = HashSet::new();
    for (line, rec) in &t.rows {
        let (id, col) = t.field(rec, *line, "subject_id")?;
        let (race, rcol) = t.field(rec, *line, "race")?;
        let (gender, _) = t.field(rec, *line, "gender")?;
        if !seen.insert(id.to_string()) {
            return Err(parse_error(file, *line, col, format!("duplicate subject {id:?}")));
        }
        let group = DemographicGroup::new(race, gender).map_err(|e| row_error(e, file, *line, rcol))?;
        records.push(SubjectRecord { subject_id: id.to_string(), group });
    }
    let fp = fingerprint(file, bytes, t.rows.len() as u64, 0);
    Ok((SubjectTable::new(records)?, fp))
}

/// Parses score rows against `subjects`. With `permissive`, invalid rows are
/// skipped and counted in the fingerprint instead of aborting.
pub fn parse_scores(
    file: &str,
    bytes: &[u8],
    subjects: SubjectTable,
    permissive: bool,
) -> Result<(ScoreSet, FileFingerprint)> {
    let t = Table::parse(file, bytes, &SCORE_COLUMNS, &[MATED_COLUMN])?;
    let mut comparisons = Vec::with_capacity(t.rows.len());
    let mut seen: HashSet<(String, String, String, String)> = HashSet::new();
    let mut rejected = 0u64;
    for (line, rec) in &t.rows {
        match score_row(&t, rec, *line, &subjects, &mut seen) {
            Ok(c) => comparisons.push(c),
            Err(e) if permissive => {
                log::warn!("skipping row: {e}");
                rejected += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let fp = fingerprint(file, bytes, t.rows.len() as u64, rejected);
    Ok((ScoreSet::new(subjects, comparisons)?, fp))
}

fn score_row(
    t: &Table,
    rec: &csv::StringRecord,
    line: u64,
    subjects: &SubjectTable,
    seen: &mut HashSet<(String, String, String, String)>,
) -> Result<ComparisonRecord> {
    let mut ids = Vec::with_capacity(4);
    for name in &SCORE_COLUMNS[..4] {
        let (v, col) = t.field(rec, line, name)?;
        if name.ends_with("subject") && subjects.index_of(v).is_none() {
            return Err(parse_error(&t.file, line, col, format!("unknown subject {v:?}")));
        }
        ids.push(v.to_string());
    }
    let score = t.real(rec, line, "score")?;
    let c = ComparisonRecord::new(&ids[0], &ids[1], &ids[2], &ids[3], score)
        .map_err(|e| row_error(e, &t.file, line, 1))?;
    if let Some((v, col)) = t.optional(rec, MATED_COLUMN) {
        let flag = match v {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(parse_error(&t.file, line, col, format!("mated flag {v:?} is not 0/1"))),
        };
        if flag != c.mated {
            return Err(parse_error(
                &t.file,
                line,
                col,
                format!("mated flag {v} contradicts subjects {:?} / {:?}", c.probe_subject, c.gallery_subject),
            ));
        }
    }
    let key = (ids[0].clone(), ids[1].clone(), ids[2].clone(), ids[3].clone());
    if !seen.insert(key) {
        return Err(parse_error(&t.file, line, 1, "duplicate comparison row".into()));
    }
    Ok(c)
}

pub fn parse_quality(file: &str, bytes: &[u8]) -> Result<(BTreeMap<String, f64>, FileFingerprint)> {
    let t = Table::parse(file, bytes, &QUALITY_COLUMNS, &[])?;
    let mut out = BTreeMap::new();
    for (line, rec) in &t.rows {
        let (id, col) = t.field(rec, *line, "sample_id")?;
        let q = t.real(rec, *line, "quality")?;
        if !(0.0..=100.0).contains(&q) {
            return Err(parse_error(file, *line, t.columns["quality"] + 1, format!("quality {q} outside [0, 100]")));
        }
        if out.insert(id.to_string(), q).is_some() {
            return Err(parse_error(file, *line, col, format!("duplicate sample {id:?}")));
        }
    }
    let fp = fingerprint(file, bytes, t.rows.len() as u64, 0);
    Ok((out, fp))
}

/// Pre-aggregated bootstrap summaries, one row per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: GroupSelector,
    pub summary: GroupSummary,
}

pub fn parse_summaries(file: &str, bytes: &[u8]) -> Result<(Vec<SummaryRow>, FileFingerprint)> {
    let t = Table::parse(file, bytes, &SUMMARY_COLUMNS, &[UNIT_COLUMN])?;
    let mut out: Vec<SummaryRow> = Vec::new();
    for (line, rec) in &t.rows {
        let (g, gcol) = t.field(rec, *line, "group")?;
        let group: GroupSelector = g.parse().map_err(|e| row_error(e, file, *line, gcol))?;
        if out.iter().any(|r| r.group == group) {
            return Err(parse_error(file, *line, gcol, format!("duplicate group {g:?}")));
        }
        let mean = t.real(rec, *line, "mean")?;
        let std = t.real(rec, *line, "std")?;
        let (m, mcol) = t.field(rec, *line, "m")?;
        let m: usize = m.parse().map_err(|_| parse_error(file, *line, mcol, format!("m {m:?} is not a count")))?;
        let unit = match t.optional(rec, UNIT_COLUMN) {
            None | Some(("" | "fraction", _)) => RateUnit::Fraction,
            Some(("percent", _)) => RateUnit::Percent,
            Some((u, col)) => return Err(parse_error(file, *line, col, format!("unknown unit {u:?}"))),
        };
        let summary = GroupSummary::new(mean, std, m, unit).map_err(|e| row_error(e.into(), file, *line, 1))?;
        out.push(SummaryRow { group, summary });
    }
    let fp = fingerprint(file, bytes, t.rows.len() as u64, 0);
    Ok((out, fp))
}

/// Every sample id seen for each subject, labelled or not.
pub type SampleIndex = BTreeMap<String, std::collections::BTreeSet<String>>;

/// Parses a full probe-by-gallery score table for identification. Subjects
/// missing from the subjects file are accepted: they act as distractors.
pub fn parse_score_table(file: &str, bytes: &[u8]) -> Result<(ScoreTable, SampleIndex, FileFingerprint)> {
    let t = Table::parse(file, bytes, &SCORE_COLUMNS, &[MATED_COLUMN])?;
    let mut table = ScoreTable::new();
    let mut samples = SampleIndex::new();
    for (line, rec) in &t.rows {
        let (ps, _) = t.field(rec, *line, "probe_subject")?;
        let (pp, _) = t.field(rec, *line, "probe_sample")?;
        let (gs, _) = t.field(rec, *line, "gallery_subject")?;
        let (gp, _) = t.field(rec, *line, "gallery_sample")?;
        let score = t.real(rec, *line, "score")?;
        table.insert(pp, gp, score).map_err(|e| row_error(e, file, *line, 1))?;
        samples.entry(ps.to_string()).or_default().insert(pp.to_string());
        samples.entry(gs.to_string()).or_default().insert(gp.to_string());
    }
    Ok((table, samples, fingerprint(file, bytes, t.rows.len() as u64, 0)))
}

pub fn parse_embeddings(file: &str, bytes: &[u8]) -> Result<(EmbeddingStore, FileFingerprint)> {
    let mut records = Vec::new();
    for (i, line) in bytes.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| parse_error(file, line_no, 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord = serde_json::from_str(&line)
            .map_err(|e| parse_error(file, line_no, e.column(), e.to_string()))?;
        records.push(rec);
    }
    let n = records.len() as u64;
    let store = EmbeddingStore::new(records).map_err(|e| e.context(file.to_string()))?;
    Ok((store, fingerprint(file, bytes, n, 0)))
}

/// Everything an audit may read.
#[derive(Debug, Clone, Default)]
pub struct InputPaths {
    pub subjects: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub quality: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub summaries: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub subjects: Option<SubjectTable>,
    pub scores: Option<ScoreSet>,
    pub quality: Option<BTreeMap<String, f64>>,
    pub embeddings: Option<EmbeddingStore>,
    pub summaries: Option<Vec<SummaryRow>>,
    pub fingerprints: Vec<FileFingerprint>,
}

pub fn ingest(paths: &InputPaths, permissive: bool) -> Result<Dataset> {
    let mut ds = Dataset::default();
    if let Some(p) = &paths.subjects {
        let (t, fp) = parse_subjects(&display_name(p), &read_bytes(p)?)?;
        ds.subjects = Some(t);
        ds.fingerprints.push(fp);
    }
    if let Some(p) = &paths.scores {
        let subjects = ds
            .subjects
            .clone()
            .ok_or_else(|| Error::Config("a scores file needs a subjects file".into()))?;
        let (s, fp) = parse_scores(&display_name(p), &read_bytes(p)?, subjects, permissive)?;
        log::info!("{}: {} comparisons, {} rejected", fp.name, s.len(), fp.rejected);
        ds.scores = Some(s);
        ds.fingerprints.push(fp);
    }
    if let Some(p) = &paths.quality {
        let (q, fp) = parse_quality(&display_name(p), &read_bytes(p)?)?;
        ds.quality = Some(q);
        ds.fingerprints.push(fp);
    }
    if let Some(p) = &paths.embeddings {
        let (e, fp) = parse_embeddings(&display_name(p), &read_bytes(p)?)?;
        ds.embeddings = Some(e);
        ds.fingerprints.push(fp);
    }
    if let Some(p) = &paths.summaries {
        let (s, fp) = parse_summaries(&display_name(p), &read_bytes(p)?)?;
        ds.summaries = Some(s);
        ds.fingerprints.push(fp);
    }
    Ok(ds)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> std::io::Result<()> {
    w.flush()
}

fn into_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

pub fn write_subjects<W: Write>(w: W, subjects: &SubjectTable) -> std::io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(SUBJECT_COLUMNS).map_err(into_io)?;
    for r in subjects.records() {
        out.write_record([r.subject_id.as_str(), r.group.race.as_str(), r.group.gender.as_str()])
            .map_err(into_io)?;
    }
    flush(out)
}

pub fn write_scores<W: Write>(w: W, scores: &ScoreSet) -> std::io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(SCORE_COLUMNS).map_err(into_io)?;
    for c in scores.comparisons() {
        let score = c.score.to_string();
        out.write_record([
            c.probe_subject.as_str(),
            c.probe_sample.as_str(),
            c.gallery_subject.as_str(),
            c.gallery_sample.as_str(),
            score.as_str(),
        ])
        .map_err(into_io)?;
    }
    flush(out)
}

pub fn write_quality<W: Write>(w: W, quality: &BTreeMap<String, f64>) -> std::io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(QUALITY_COLUMNS).map_err(into_io)?;
    for (id, q) in quality {
        out.write_record([id.as_str(), q.to_string().as_str()]).map_err(into_io)?;
    }
    flush(out)
}

pub fn write_summaries<W: Write>(w: W, rows: &[SummaryRow]) -> std::io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(SUMMARY_COLUMNS.iter().chain([&UNIT_COLUMN])).map_err(into_io)?;
    for r in rows {
        let s = &r.summary;
        out.write_record([
            r.group.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.m.to_string(),
            s.unit.name().to_string(),
        ])
        .map_err(into_io)?;
    }
    flush(out)
}

pub fn write_embeddings<W: Write>(mut w: W, store: &EmbeddingStore) -> std::io::Result<()> {
    for r in store.records() {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
