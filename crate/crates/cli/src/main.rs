mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use fairprint_core::audit::{
    identification_threshold, run_identification_audit, run_quality, run_sensitivity, run_summary_audit,
    run_verification_audit, AuditConfig, AuditMode, IdentData, ThresholdSource,
};
use fairprint_core::diagnostics::FlipMode;
use fairprint_core::domain::{
    calibrate_threshold_fmr, parse_pair, verification_rates, GroupSelector, ScoreSet, SubjectTable,
};
use fairprint_core::io::{
    ingest, parse_score_table, write_embeddings, write_file, write_quality, write_scores, write_subjects, Dataset,
    InputPaths,
};
use fairprint_core::openset::{CohortSizes, ScoreTable};
use fairprint_core::report::{
    canonical_json, emit_report, markdown, AuditReport, Format, GroupFmr, GroupFmrCalibration, ThresholdReport,
};
use fairprint_core::resample::ResampleUnit;
use fairprint_core::synth::{self, EmbeddingConfig, GroupScoreModel, Provenance};
use fairprint_core::{Error, Result};

use args::*;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Verify(a) => verify(a),
        Command::Ident(a) => ident(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Sensitivity(a) => sensitivity(a),
        Command::Quality(a) => quality(a),
        Command::Report(a) => report(a),
    }
}

fn selectors(raw: &[String]) -> Result<Vec<GroupSelector>> {
    raw.iter().map(|s| s.parse()).collect()
}

fn base_config(mode: AuditMode, t: &TestArgs) -> Result<AuditConfig> {
    let mut c = AuditConfig::new(mode);
    c.alpha = t.alpha;
    c.bootstrap.m = t.bootstrap_m;
    c.bootstrap.seed = t.seed;
    c.bootstrap.unit = match t.resample_unit {
        UnitArg::Subject => ResampleUnit::Subject,
        UnitArg::Comparison => ResampleUnit::Comparison,
    };
    if let Some(p) = &t.pairs {
        c.pairs = p.iter().map(|s| parse_pair(s)).collect::<Result<_>>()?;
    }
    if let Some(g) = &t.groups {
        c.groups = selectors(g)?;
    }
    Ok(c)
}

fn threshold_source(t: &ThresholdArgs) -> Result<Option<ThresholdSource>> {
    Ok(match (t.threshold, t.target_fmr, t.target_fnir) {
        (Some(value), None, None) => Some(ThresholdSource::Fixed { value }),
        (None, Some(target), None) => Some(ThresholdSource::TargetFmr { target }),
        (None, None, Some(target)) => {
            let reference = t
                .ref_group
                .as_deref()
                .ok_or_else(|| Error::Config("--target-fnir needs --ref-group".into()))?
                .parse()?;
            Some(ThresholdSource::TargetFnir { target, reference })
        }
        (None, None, None) => None,
        _ => return Err(Error::Config("give only one of --threshold, --target-fmr, --target-fnir".into())),
    })
}

fn flip_modes(raw: &[FlipArg]) -> Vec<FlipMode> {
    let mut out = Vec::new();
    for f in raw {
        let m = match f {
            FlipArg::PointZ => FlipMode::PointZ,
            FlipArg::BootstrapWelch => FlipMode::BootstrapWelch,
            FlipArg::None => continue,
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

fn formats(raw: &[String]) -> Result<Vec<Format>> {
    let mut out: Vec<Format> = raw.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn emit(report: &AuditReport, out: &OutputArgs) -> Result<()> {
    let formats = formats(&out.format)?;
    match &out.out {
        Some(dir) => {
            create_dir(dir)?;
            for p in emit_report(report, dir, &formats)? {
                log::info!("wrote {}", p.display());
            }
        }
        None if formats == [Format::Markdown] => print!("{}", markdown(report)),
        None => {
            report.validate()?;
            print!("{}", report.to_json()?);
        }
    }
    Ok(())
}

/// Prints `text`, or writes it to `dir/name` when a directory is given.
fn print_or_write(text: &str, out: Option<&PathBuf>, name: &str) -> Result<()> {
    match out {
        Some(dir) => {
            create_dir(dir)?;
            write_file(&dir.join(name), text.as_bytes())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn ingest_scores(input: &InputArgs) -> Result<Dataset> {
    if input.subjects.is_none() || input.scores.is_none() {
        return Err(Error::Config("--subjects and --scores are required".into()));
    }
    ingest(
        &InputPaths {
            subjects: input.subjects.clone(),
            scores: input.scores.clone(),
            quality: input.quality.clone(),
            ..InputPaths::default()
        },
        input.permissive,
    )
}

fn verify(a: VerifyArgs) -> Result<()> {
    let report = if let Some(path) = &a.summaries {
        if threshold_source(&a.threshold)?.is_some() {
            return Err(Error::Config("summary rows already fix the threshold; drop the threshold flags".into()));
        }
        let mut cfg = base_config(AuditMode::Summaries, &a.test)?;
        cfg.grand_mean = a.grand_mean;
        cfg.point_tests = false;
        cfg.flip_modes.clear();
        let ds = ingest(&InputPaths { summaries: Some(path.clone()), ..InputPaths::default() }, false)?;
        let rows = ds.summaries.as_deref().unwrap_or_default();
        // Default lists shrink to the groups the file actually provides.
        let present = |g: &GroupSelector| rows.iter().any(|r| &r.group == g);
        if a.test.pairs.is_none() {
            cfg.pairs.retain(|(x, y)| present(x) && present(y));
        }
        if a.test.groups.is_none() {
            cfg.groups.retain(|g| present(g));
        }
        run_summary_audit(&cfg, rows, &ds)?
    } else {
        let mut cfg = base_config(AuditMode::Verify, &a.test)?;
        cfg.threshold = threshold_source(&a.threshold)?;
        cfg.grand_mean = a.grand_mean;
        cfg.flip_modes = flip_modes(&a.flips);
        cfg.point_tests = !a.no_point_tests;
        cfg.quality_equal_sampling = a.quality_equal_sampling;
        cfg.validate()?;
        let ds = ingest_scores(&a.input)?;
        run_verification_audit(&cfg, &ds)?
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    emit(&report, &a.output)
}

enum IdentSource {
    Embeddings,
    Table(ScoreTable, fairprint_core::io::SampleIndex),
}

/// Loads subjects plus embeddings or a score table for identification.
fn load_ident(
    subjects: &Path,
    embeddings: Option<&PathBuf>,
    scores: Option<&PathBuf>,
) -> Result<(Dataset, IdentSource)> {
    let mut ds = ingest(
        &InputPaths { subjects: Some(subjects.to_path_buf()), embeddings: embeddings.cloned(), ..InputPaths::default() },
        false,
    )?;
    let source = match scores {
        Some(path) if embeddings.is_none() => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
            let (table, samples, fp) = parse_score_table(&name, &bytes)?;
            ds.fingerprints.push(fp);
            IdentSource::Table(table, samples)
        }
        _ if embeddings.is_some() => IdentSource::Embeddings,
        _ => return Err(Error::Config("identification needs --embeddings or --scores".into())),
    };
    Ok((ds, source))
}

fn ident_data<'a>(ds: &'a Dataset, src: &'a IdentSource, subjects: &'a SubjectTable) -> IdentData<'a> {
    match src {
        IdentSource::Embeddings => IdentData::from_embeddings(subjects, ds.embeddings.as_ref().expect("loaded")),
        IdentSource::Table(table, samples) => IdentData::from_score_table(subjects, table, samples.clone()),
    }
}

fn cohort(per_group: Option<usize>, n_mates: Option<usize>) -> Option<CohortSizes> {
    per_group.zip(n_mates).map(|(per_group, n_mates)| CohortSizes { per_group, n_mates })
}

fn ident(a: IdentArgs) -> Result<()> {
    let mut cfg = base_config(AuditMode::Ident, &a.test)?;
    if a.test.groups.is_none() {
        // audited groups follow the pairs when only pairs are given
        if a.test.pairs.is_some() {
            cfg.groups.retain(|g| cfg.pairs.iter().any(|(x, y)| x == g || y == g));
        }
    }
    cfg.threshold = threshold_source(&a.threshold)?;
    cfg.rank = a.input.rank;
    cfg.cohort = cohort(a.input.per_group, a.input.n_mates);
    cfg.sweep_points = a.sweep_points;
    cfg.point_tests = false;
    cfg.flip_modes.clear();
    cfg.validate()?;
    let (ds, src) = load_ident(&a.input.subjects, a.input.embeddings.as_ref(), a.input.scores.as_ref())?;
    let subjects = ds.subjects.clone().unwrap_or_default();
    let data = ident_data(&ds, &src, &subjects);
    let report = run_identification_audit(&cfg, &data, &ds)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    emit(&report, &a.output)
}

fn fmr_threshold_report(scores: &ScoreSet, target: f64) -> Result<ThresholdReport> {
    let imp: Vec<f64> = scores.impostor_scores().collect();
    let mut report = ThresholdReport::from_fmr(calibrate_threshold_fmr(&imp, target)?);
    for g in GroupSelector::canonical_with_marginals() {
        let set = scores.for_selector(&g);
        let imp: Vec<f64> = set.impostor_scores().collect();
        if imp.is_empty() {
            continue;
        }
        report
            .per_group_fmr_calibration
            .push(GroupFmrCalibration { group: g.clone(), calibration: calibrate_threshold_fmr(&imp, target)? });
        report.per_group_fmr.push(GroupFmr { group: g, fmr: verification_rates(&set, report.value)?.fmr });
    }
    report.global_fmr = verification_rates(scores, report.value)?.fmr;
    Ok(report)
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let report = match (a.target_fmr, a.target_fnir) {
        (Some(target), _) => {
            let input = InputArgs {
                subjects: Some(a.subjects.clone()),
                scores: a.scores.clone(),
                quality: None,
                permissive: a.permissive,
            };
            let ds = ingest_scores(&input)?;
            fmr_threshold_report(ds.scores.as_ref().expect("ingested"), target)?
        }
        (None, Some(target)) => {
            let mut cfg = AuditConfig::new(AuditMode::Ident);
            let reference: GroupSelector =
                a.ref_group.as_deref().ok_or_else(|| Error::Config("--target-fnir needs --ref-group".into()))?.parse()?;
            cfg.threshold = Some(ThresholdSource::TargetFnir { target, reference });
            cfg.rank = a.rank;
            cfg.cohort = cohort(a.per_group, a.n_mates);
            cfg.bootstrap.seed = a.seed;
            let (ds, src) = load_ident(&a.subjects, a.embeddings.as_ref(), a.scores.as_ref())?;
            let subjects = ds.subjects.clone().unwrap_or_default();
            identification_threshold(&cfg, &ident_data(&ds, &src, &subjects))?
        }
        (None, None) => return Err(Error::Config("give --target-fmr or --target-fnir".into())),
    };
    print_or_write(&canonical_json(&report)?, a.out.as_ref(), "threshold.json")
}

fn load_models(a: &SynthArgs) -> Result<(Vec<GroupScoreModel>, u64)> {
    let Some(path) = &a.config else {
        return Ok((synth::preset(&a.preset, a.n_subjects)?, a.seed));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(models) = serde_json::from_str::<Vec<GroupScoreModel>>(&text) {
        return Ok((models, a.seed));
    }
    let prov: Provenance = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: neither a model list nor a provenance record: {e}", path.display())))?;
    Ok((prov.models, prov.seed))
}

fn bytes_of(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::Data(e.to_string()))?;
    Ok(buf)
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let (models, seed) = load_models(&a)?;
    let ds = synth::generate(&models, seed)?;
    let dir = &a.out;
    create_dir(dir)?;
    write_file(&dir.join("subjects.csv"), &bytes_of(|b| write_subjects(b, ds.score_set.subjects()))?)?;
    write_file(&dir.join("scores.csv"), &bytes_of(|b| write_scores(b, &ds.score_set))?)?;
    write_file(&dir.join("quality.csv"), &bytes_of(|b| write_quality(b, &ds.quality))?)?;
    let mut outliers = String::from("sample_id\n");
    for s in &ds.outlier_samples {
        outliers.push_str(s);
        outliers.push('\n');
    }
    write_file(&dir.join("outliers.csv"), outliers.as_bytes())?;
    write_file(&dir.join("provenance.json"), canonical_json(&ds.provenance)?.as_bytes())?;
    if a.embeddings {
        let cfg = EmbeddingConfig { dim: a.dim, distractors: a.distractors, ..EmbeddingConfig::default() };
        let emb = synth::generate_embeddings(&models, seed, cfg)?;
        write_file(&dir.join("embeddings.jsonl"), &bytes_of(|b| write_embeddings(b, &emb.store))?)?;
    }
    log::info!("wrote {} comparisons to {}", ds.score_set.len(), dir.display());
    Ok(())
}

fn sensitivity(a: SensitivityArgs) -> Result<()> {
    let mut cfg = base_config(AuditMode::Verify, &a.test)?;
    cfg.threshold = threshold_source(&a.threshold)?;
    cfg.flip_modes = flip_modes(&a.flips);
    cfg.validate()?;
    let ds = ingest_scores(&a.input)?;
    let flips = run_sensitivity(&cfg, ds.scores.as_ref().expect("ingested"))?;
    print_or_write(&canonical_json(&flips)?, a.out.as_ref(), "sensitivity.json")
}

fn quality(a: QualityArgs) -> Result<()> {
    if a.input.quality.is_none() {
        return Err(Error::Config("--quality is required".into()));
    }
    let mut cfg = base_config(AuditMode::Verify, &a.test)?;
    cfg.quality_equal_sampling = a.equal_sampling;
    let ds = ingest_scores(&a.input)?;
    let q = run_quality(&cfg, ds.scores.as_ref().expect("ingested"), ds.quality.as_ref().expect("ingested"))?;
    print_or_write(&canonical_json(&q)?, a.out.as_ref(), "quality.json")
}

fn report(a: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let report = AuditReport::from_json(&text)?;
    emit(&report, &a.output)
}
