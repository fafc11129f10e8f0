//! Audit report model and its JSON, CSV, markdown and plot-data renderings.
//!
//! JSON output has sorted keys and no run-dependent content, so equal inputs
//! and seeds give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use fairprint_stats::{Df, GrandMean, RateUnit, TestResult};

use crate::audit::{AuditConfig, AuditMode};
use crate::diagnostics::{FlipReport, OutlierFlag, QualityComparison};
use crate::domain::{FmrCalibration, GroupSelector, Rate, RatePoint};
use crate::error::{Error, Result};
use crate::io::{write_file, FileFingerprint};
use crate::openset::{CohortSizes, FnirCalibration, SweepPoint};
use crate::resample::Metric;

pub const SCHEMA_VERSION: u32 = 1;

/// Sorted-key, two-space-indented JSON with a trailing newline.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value).map_err(|e| Error::Data(format!("serialization: {e}")))?;
    let mut s = serde_json::to_string_pretty(&value).map_err(|e| Error::Data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self { name: "fairprint".into(), version: env!("CARGO_PKG_VERSION").into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCount {
    pub group: GroupSelector,
    pub subjects: u64,
    pub genuine: u64,
    pub impostor: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub comparisons: u64,
    pub genuine: u64,
    pub impostor: u64,
    pub subjects: u64,
    /// Comparisons whose probe subject has a non-canonical label.
    pub unlabeled_comparisons: u64,
    pub rejected_rows: u64,
    pub groups: Vec<GroupCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFmr {
    pub group: GroupSelector,
    pub fmr: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFmrCalibration {
    pub group: GroupSelector,
    pub calibration: FmrCalibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    #[serde(with = "fairprint_stats::serde_float")]
    pub value: f64,
    pub fmr_calibration: Option<FmrCalibration>,
    /// What each group's own calibration would have chosen; informational.
    pub per_group_fmr_calibration: Vec<GroupFmrCalibration>,
    pub fnir_calibration: Option<FnirCalibration>,
    pub fnir_reference: Option<GroupSelector>,
    /// FMR over all impostor comparisons at the applied threshold.
    pub global_fmr: Rate,
    pub per_group_fmr: Vec<GroupFmr>,
}

impl ThresholdReport {
    pub fn fixed(value: f64) -> Self {
        Self {
            value,
            fmr_calibration: None,
            per_group_fmr_calibration: Vec::new(),
            fnir_calibration: None,
            fnir_reference: None,
            global_fmr: Rate::Undefined,
            per_group_fmr: Vec::new(),
        }
    }

    pub fn from_fmr(cal: FmrCalibration) -> Self {
        Self { fmr_calibration: Some(cal.clone()), ..Self::fixed(cal.threshold) }
    }

    pub fn from_fnir(cal: FnirCalibration, reference: GroupSelector) -> Self {
        Self { fnir_calibration: Some(cal), fnir_reference: Some(reference), ..Self::fixed(cal.threshold) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    /// `None` for the whole population.
    pub group: Option<GroupSelector>,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub m: usize,
    pub unit: RateUnit,
    pub replicates: Option<Vec<f64>>,
    /// Full-sample estimate, when raw data were available.
    pub point: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub a: GroupSelector,
    pub b: GroupSelector,
    pub test: TestResult,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub grand_mean: GrandMean,
    pub groups: Vec<GroupSelector>,
    pub test: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentGroupRow {
    pub group: GroupSelector,
    #[serde(with = "fairprint_stats::serde_float")]
    pub threshold: f64,
    pub gallery_size: u64,
    pub n_mated: u64,
    pub n_nonmated: u64,
    pub fpir: Rate,
    pub fnir: Rate,
    pub tpir: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub group: GroupSelector,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationSection {
    /// The one threshold applied to every group.
    #[serde(with = "fairprint_stats::serde_float")]
    pub threshold: f64,
    pub rank: usize,
    pub cohort: CohortSizes,
    pub distractors: u64,
    pub groups: Vec<IdentGroupRow>,
    pub sweeps: Vec<SweepCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub group: Option<GroupSelector>,
    pub points: Vec<RatePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSection {
    pub total: u64,
    pub by_group: BTreeMap<String, u64>,
    /// Lowest-scoring flags, capped in length.
    pub lowest: Vec<OutlierFlag>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub outliers: Option<OutlierSection>,
    pub flips: Vec<FlipReport>,
    pub quality: Option<QualityComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub mode: AuditMode,
    pub config: AuditConfig,
    pub inputs: Vec<FileFingerprint>,
    pub data: Option<DataSummary>,
    pub threshold: Option<ThresholdReport>,
    pub estimates: Vec<EstimateRow>,
    /// Welch tests on bootstrap estimates, one row per configured pair.
    pub pairwise: Vec<PairRow>,
    /// Two-proportion z-tests on full-sample TMRs.
    pub point_tests: Vec<PairRow>,
    pub anova: Vec<AnovaRow>,
    pub identification: Option<IdentificationSection>,
    pub roc: Vec<RocCurve>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
}

impl AuditReport {
    pub fn empty() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: ToolInfo::default(),
            mode: AuditMode::Verify,
            config: AuditConfig::new(AuditMode::Verify),
            inputs: Vec::new(),
            data: None,
            threshold: None,
            estimates: Vec::new(),
            pairwise: Vec::new(),
            point_tests: Vec::new(),
            anova: Vec::new(),
            identification: None,
            roc: Vec::new(),
            diagnostics: Diagnostics::default(),
            warnings: Vec::new(),
        }
    }

    /// Canonical JSON: sorted keys, two-space indent, trailing newline.
    pub fn to_json(&self) -> Result<String> {
        canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            file: "report".into(),
            line: e.line() as u64,
            column: e.column(),
            message: e.to_string(),
        })?;
        r.validate()?;
        Ok(r)
    }

    /// Structural checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Data(format!("invalid report: {m}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.mode != self.config.mode {
            return bad("mode differs from configuration".into());
        }
        if self.pairwise.len() != self.config.pairs.len() {
            return bad(format!("{} pairwise rows for {} configured pairs", self.pairwise.len(), self.config.pairs.len()));
        }
        let tests = self.pairwise.iter().chain(&self.point_tests).map(|p| &p.test).chain(self.anova.iter().map(|a| &a.test));
        for t in tests {
            if !(0.0..=1.0).contains(&t.p_value) {
                return bad(format!("p-value {} outside [0, 1]", t.p_value));
            }
            if t.reject != (t.p_value < t.alpha) {
                return bad("decision disagrees with p-value".into());
            }
        }
        for e in &self.estimates {
            if !(e.std >= 0.0) || !e.mean.is_finite() {
                return bad(format!("estimate for {:?} has mean {} std {}", e.group, e.mean, e.std));
            }
            if let Some(r) = &e.replicates {
                if r.len() != e.m {
                    return bad(format!("{} replicates but m = {}", r.len(), e.m));
                }
            }
        }
        if let Some(id) = &self.identification {
            if id.groups.iter().any(|g| g.threshold.to_bits() != id.threshold.to_bits()) {
                return bad("identification groups use different thresholds".into());
            }
            if let Some(t) = &self.threshold {
                if t.value.to_bits() != id.threshold.to_bits() {
                    return bad("identification threshold differs from the threshold section".into());
                }
            }
            let rates = id.groups.iter().flat_map(|g| [g.fpir, g.fnir, g.tpir]);
            if rates.filter_map(Rate::value).any(|v| !(0.0..=1.0).contains(&v)) {
                return bad("identification rate outside [0, 1]".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Markdown,
    Plot,
}

impl Format {
    pub const ALL: [Format; 4] = [Format::Json, Format::Csv, Format::Markdown, Format::Plot];
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "md" | "markdown" => Ok(Format::Markdown),
            "plot" => Ok(Format::Plot),
            other => Err(Error::Config(format!("unknown format {other:?}: use json, csv, md, plot"))),
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn group_name(g: &Option<GroupSelector>) -> String {
    g.as_ref().map_or_else(|| "all".to_string(), |g| g.to_string())
}

fn df_columns(df: &Df) -> (String, String) {
    match df {
        Df::None {} => (String::new(), String::new()),
        Df::One { nu } => (nu.to_string(), String::new()),
        Df::Two { nu1, nu2 } => (nu1.to_string(), nu2.to_string()),
    }
}

fn grand_mean_name(g: &GrandMean) -> String {
    match g {
        GrandMean::Unweighted => "unweighted".into(),
        GrandMean::Supplied(v) => format!("supplied={v}"),
    }
}

fn csv_table(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let e = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(header).map_err(e)?;
    for r in rows {
        w.write_record(r).map_err(e)?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

fn test_columns(t: &TestResult) -> Vec<String> {
    let (d1, d2) = df_columns(&t.df);
    vec![
        t.statistic.to_string(),
        d1,
        d2,
        t.p_value.to_string(),
        t.alpha.to_string(),
        t.critical_value.to_string(),
        t.reject.to_string(),
        t.degenerate.to_string(),
    ]
}

const TEST_HEADER: [&str; 8] = ["statistic", "df1", "df2", "p_value", "alpha", "critical_value", "reject", "degenerate"];

/// Named CSV tables of the report.
pub fn csv_tables(r: &AuditReport) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let mut out = Vec::new();
    out.push((
        "estimates.csv",
        csv_table(
            &["group", "metric", "mean", "std", "m", "unit", "point"],
            r.estimates
                .iter()
                .map(|e| {
                    vec![
                        group_name(&e.group),
                        format!("{:?}", e.metric).to_lowercase(),
                        e.mean.to_string(),
                        e.std.to_string(),
                        e.m.to_string(),
                        e.unit.name().into(),
                        opt(e.point),
                    ]
                })
                .collect(),
        )?,
    ));
    let mut header = vec!["test", "a", "b"];
    header.extend(TEST_HEADER);
    let mut rows = Vec::new();
    for (name, set) in [("welch", &r.pairwise), ("two_prop_z", &r.point_tests)] {
        for p in set {
            let mut row = vec![name.to_string(), p.a.to_string(), p.b.to_string()];
            row.extend(test_columns(&p.test));
            rows.push(row);
        }
    }
    out.push(("pairwise.csv", csv_table(&header, rows)?));
    let mut header = vec!["grand_mean", "groups"];
    header.extend(TEST_HEADER);
    out.push((
        "anova.csv",
        csv_table(
            &header,
            r.anova
                .iter()
                .map(|a| {
                    let groups: Vec<String> = a.groups.iter().map(|g| g.to_string()).collect();
                    let mut row = vec![grand_mean_name(&a.grand_mean), groups.join(" ")];
                    row.extend(test_columns(&a.test));
                    row
                })
                .collect(),
        )?,
    ));
    if let Some(id) = &r.identification {
        out.push((
            "identification.csv",
            csv_table(
                &["group", "threshold", "gallery_size", "n_mated", "n_nonmated", "fpir", "fnir", "tpir"],
                id.groups
                    .iter()
                    .map(|g| {
                        vec![
                            g.group.to_string(),
                            g.threshold.to_string(),
                            g.gallery_size.to_string(),
                            g.n_mated.to_string(),
                            g.n_nonmated.to_string(),
                            opt(g.fpir.value()),
                            opt(g.fnir.value()),
                            opt(g.tpir.value()),
                        ]
                    })
                    .collect(),
            )?,
        ));
    }
    if !r.diagnostics.flips.is_empty() {
        out.push((
            "flips.csv",
            csv_table(
                &["a", "b", "mode", "status", "flipped_group", "flips_needed", "flipped_fraction", "candidates"],
                r.diagnostics
                    .flips
                    .iter()
                    .map(|f| {
                        vec![
                            f.pair.0.to_string(),
                            f.pair.1.to_string(),
                            json_name(&f.mode),
                            json_name(&f.status),
                            f.flipped_group.to_string(),
                            opt(f.flips_needed),
                            opt(f.flipped_fraction),
                            f.candidates.to_string(),
                        ]
                    })
                    .collect(),
            )?,
        ));
    }
    Ok(out)
}

fn json_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// Plot-data tables: ROC points and the FPIR/FNIR sweep.
pub fn plot_tables(r: &AuditReport) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let mut out = Vec::new();
    if !r.roc.is_empty() {
        let rows = r
            .roc
            .iter()
            .flat_map(|c| {
                c.points.iter().map(move |p| {
                    vec![group_name(&c.group), p.threshold.to_string(), opt(p.tmr.value()), opt(p.fmr.value())]
                })
            })
            .collect();
        out.push(("roc.csv", csv_table(&["group", "threshold", "tmr", "fmr"], rows)?));
    }
    if let Some(id) = &r.identification {
        let rows = id
            .sweeps
            .iter()
            .flat_map(|c| {
                c.points.iter().map(move |p| {
                    vec![c.group.to_string(), p.threshold.to_string(), opt(p.fpir.value()), opt(p.fnir.value())]
                })
            })
            .collect();
        out.push(("sweep.csv", csv_table(&["group", "threshold", "fpir", "fnir"], rows)?));
    }
    Ok(out)
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        v.to_string()
    }
}

fn fmt_df(df: &Df) -> String {
    match df {
        Df::None {} => "-".into(),
        Df::One { nu } => format!("{nu:.2}"),
        Df::Two { nu1, nu2 } => format!("({nu1}, {nu2})"),
    }
}

fn decision(t: &TestResult) -> &'static str {
    if t.reject {
        "Yes"
    } else {
        "No"
    }
}

/// Human-readable summary.
pub fn markdown(r: &AuditReport) -> String {
    let mut s = String::new();
    let mode = json_name(&r.mode);
    let _ = writeln!(s, "# Fairness audit ({mode})\n");
    let b = &r.config.bootstrap;
    let _ = writeln!(
        s,
        "alpha = {}, bootstrap m = {}, seed = {}, resampling unit = {}\n",
        r.config.alpha,
        b.m,
        b.seed,
        json_name(&b.unit)
    );
    if let Some(t) = &r.threshold {
        let _ = writeln!(s, "Threshold: {}\n", t.value);
    }
    if !r.inputs.is_empty() {
        let _ = writeln!(s, "## Inputs\n\n| file | rows | rejected | sha256 |\n|---|---|---|---|");
        for f in &r.inputs {
            let _ = writeln!(s, "| {} | {} | {} | `{}` |", f.name, f.rows, f.rejected, f.sha256);
        }
        s.push('\n');
    }
    if !r.estimates.is_empty() {
        let _ = writeln!(s, "## Estimates\n\n| group | metric | mean | std | m | point |\n|---|---|---|---|---|---|");
        for e in &r.estimates {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                group_name(&e.group),
                json_name(&e.metric),
                fmt_num(e.mean),
                fmt_num(e.std),
                e.m,
                e.point.map_or("-".into(), fmt_num)
            );
        }
        s.push('\n');
    }
    let _ = writeln!(s, "## Pairwise Welch tests\n\n| pair | \\|Z_w\\| | df | p-value | reject |\n|---|---|---|---|---|");
    for p in &r.pairwise {
        let _ = writeln!(
            s,
            "| {}:{} | {} | {} | {} | {} |",
            p.a,
            p.b,
            fmt_num(p.test.statistic.abs()),
            fmt_df(&p.test.df),
            fmt_num(p.test.p_value),
            decision(&p.test)
        );
    }
    s.push('\n');
    if !r.point_tests.is_empty() {
        let _ = writeln!(s, "## Two-proportion z-tests\n\n| pair | Z | p-value | reject |\n|---|---|---|---|");
        for p in &r.point_tests {
            let _ = writeln!(s, "| {}:{} | {} | {} | {} |", p.a, p.b, fmt_num(p.test.statistic), fmt_num(p.test.p_value), decision(&p.test));
        }
        s.push('\n');
    }
    if !r.anova.is_empty() {
        let _ = writeln!(s, "## ANOVA\n\n| grand mean | F | df | critical | p-value | reject |\n|---|---|---|---|---|---|");
        for a in &r.anova {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                grand_mean_name(&a.grand_mean),
                fmt_num(a.test.statistic),
                fmt_df(&a.test.df),
                fmt_num(a.test.critical_value),
                fmt_num(a.test.p_value),
                decision(&a.test)
            );
        }
        s.push('\n');
    }
    if let Some(id) = &r.identification {
        let _ = writeln!(
            s,
            "## Identification\n\nShared threshold {} at rank {}; {} distractors.\n\n| group | gallery | mated | non-mated | FPIR | FNIR | TPIR |\n|---|---|---|---|---|---|---|",
            id.threshold, id.rank, id.distractors
        );
        let rate = |r: Rate| r.value().map_or("undefined".into(), fmt_num);
        for g in &id.groups {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} |",
                g.group, g.gallery_size, g.n_mated, g.n_nonmated, rate(g.fpir), rate(g.fnir), rate(g.tpir)
            );
        }
        s.push('\n');
    }
    if !r.diagnostics.flips.is_empty() {
        let _ = writeln!(s, "## Minimal flips\n\n| pair | mode | status | flips | fraction |\n|---|---|---|---|---|");
        for f in &r.diagnostics.flips {
            let _ = writeln!(
                s,
                "| {}:{} | {} | {} | {} | {} |",
                f.pair.0,
                f.pair.1,
                json_name(&f.mode),
                json_name(&f.status),
                f.flips_needed.map_or("-".into(), |k| k.to_string()),
                f.flipped_fraction.map_or("-".into(), |v| format!("{:.4}%", 100.0 * v))
            );
        }
        s.push('\n');
    }
    if let Some(o) = &r.diagnostics.outliers {
        let _ = writeln!(s, "## Genuine scores below threshold\n\n{} in total.\n", o.total);
    }
    if !r.warnings.is_empty() {
        let _ = writeln!(s, "## Warnings\n");
        for w in &r.warnings {
            let _ = writeln!(s, "- {w}");
        }
    }
    s
}

/// Writes the requested renderings into `dir`, returning the paths written.
pub fn emit_report(report: &AuditReport, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    report.validate()?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for f in formats {
        match f {
            Format::Json => files.push(("report.json".into(), report.to_json()?.into_bytes())),
            Format::Markdown => files.push(("report.md".into(), markdown(report).into_bytes())),
            Format::Csv => files.extend(csv_tables(report)?.into_iter().map(|(n, b)| (n.to_string(), b))),
            Format::Plot => files.extend(plot_tables(report)?.into_iter().map(|(n, b)| (n.to_string(), b))),
        }
    }
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        write_file(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}
