use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fairprint", version, about = "Demographic fairness audits for biometric comparison scores")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verification audit: bootstrap TMR per group and pairwise tests.
    Verify(VerifyArgs),
    /// Open-set identification audit: FPIR/FNIR per group at a shared threshold.
    Ident(IdentArgs),
    /// Print the decision threshold for an FMR or FNIR target.
    Calibrate(CalibrateArgs),
    /// Generate synthetic score, quality and embedding files.
    Synth(SynthArgs),
    /// Minimal number of genuine-score flips that erases each significant difference.
    Sensitivity(SensitivityArgs),
    /// Compare per-group sample quality distributions.
    Quality(QualityArgs),
    /// Validate a saved report.json and render it in other formats.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// subjects.csv: subject_id,race,gender
    #[arg(long)]
    pub subjects: Option<PathBuf>,
    /// scores.csv: probe_subject,probe_sample,gallery_subject,gallery_sample,score
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// quality.csv: sample_id,quality
    #[arg(long)]
    pub quality: Option<PathBuf>,
    /// Skip invalid score rows (counted in the report) instead of aborting.
    #[arg(long)]
    pub permissive: bool,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Fixed decision threshold.
    #[arg(long, allow_negative_numbers = true, conflicts_with_all = ["target_fmr", "target_fnir"])]
    pub threshold: Option<f64>,
    /// Calibrate the threshold to this false match rate over all impostors.
    #[arg(long, conflicts_with = "target_fnir")]
    pub target_fmr: Option<f64>,
    /// Calibrate the threshold to this FNIR on the reference group.
    #[arg(long, requires = "ref_group")]
    pub target_fnir: Option<f64>,
    /// Reference group for --target-fnir, e.g. WM.
    #[arg(long)]
    pub ref_group: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UnitArg {
    Subject,
    Comparison,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 10)]
    pub bootstrap_m: usize,
    /// Master seed for every random stream.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Resampling unit for the bootstrap.
    #[arg(long, value_enum, default_value_t = UnitArg::Subject)]
    pub resample_unit: UnitArg,
    /// Comma-separated pairs, e.g. WF:WM,B:W (default: the six standard pairs).
    #[arg(long, value_delimiter = ',')]
    pub pairs: Option<Vec<String>>,
    /// Comma-separated groups to estimate (default: BF,BM,WF,WM,B,W,F,M).
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory; without it the report is printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated formats: json, csv, md, plot.
    #[arg(long, value_delimiter = ',', default_value = "json,csv,md,plot")]
    pub format: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FlipArg {
    PointZ,
    BootstrapWelch,
    None,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Pre-aggregated rows: group,mean,std,m[,unit]. Replaces --scores.
    #[arg(long, conflicts_with_all = ["scores", "quality"])]
    pub summaries: Option<PathBuf>,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[command(flatten)]
    pub test: TestArgs,
    /// Grand mean for the supplied-mean ANOVA (default: population bootstrap mean).
    #[arg(long)]
    pub grand_mean: Option<f64>,
    /// Flip analyses to run.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "point-z")]
    pub flips: Vec<FlipArg>,
    /// Skip two-proportion z-tests on full-sample rates.
    #[arg(long)]
    pub no_point_tests: bool,
    /// Compare quality on an equal number of samples per group, drawn with this seed.
    #[arg(long)]
    pub quality_equal_sampling: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct IdentInput {
    /// subjects.csv; samples of unlisted subjects become distractors.
    #[arg(long)]
    pub subjects: PathBuf,
    /// JSON-lines embeddings: {"sample_id", "subject_id", "vec"}.
    #[arg(long, required_unless_present = "scores", conflicts_with = "scores")]
    pub embeddings: Option<PathBuf>,
    /// Full probe-by-gallery score table in scores.csv format.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Candidate list length.
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    /// Subjects drawn per group (default: smallest group cohort).
    #[arg(long, requires = "n_mates")]
    pub per_group: Option<usize>,
    /// Audited-group subjects enrolled as mates.
    #[arg(long, requires = "per_group")]
    pub n_mates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IdentArgs {
    #[command(flatten)]
    pub input: IdentInput,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[command(flatten)]
    pub test: TestArgs,
    /// Thresholds in the FPIR/FNIR sweep.
    #[arg(long, default_value_t = 50)]
    pub sweep_points: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// subjects.csv
    #[arg(long)]
    pub subjects: PathBuf,
    /// scores.csv (verification scores for --target-fmr, a score table for --target-fnir)
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Embeddings for --target-fnir.
    #[arg(long, conflicts_with = "scores")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, conflicts_with = "target_fnir", required_unless_present = "target_fnir")]
    pub target_fmr: Option<f64>,
    #[arg(long, requires = "ref_group")]
    pub target_fnir: Option<f64>,
    #[arg(long)]
    pub ref_group: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    #[arg(long, requires = "n_mates")]
    pub per_group: Option<usize>,
    #[arg(long, requires = "per_group")]
    pub n_mates: Option<usize>,
    /// Seed for gallery construction.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub permissive: bool,
    /// Write threshold.json here instead of printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Built-in model set: identical, differential, outliers.
    #[arg(long, default_value = "identical", conflicts_with = "config")]
    pub preset: String,
    /// JSON model list, or a provenance.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Subjects per group for presets.
    #[arg(long, default_value_t = 200)]
    pub n_subjects: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write embeddings.jsonl.
    #[arg(long)]
    pub embeddings: bool,
    /// Distractor identities in the embedding set.
    #[arg(long, default_value_t = 1000)]
    pub distractors: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = 192)]
    pub dim: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[command(flatten)]
    pub test: TestArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "point-z,bootstrap-welch")]
    pub flips: Vec<FlipArg>,
    /// Write sensitivity.json here instead of printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QualityArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub test: TestArgs,
    #[arg(long)]
    pub equal_sampling: Option<u64>,
    /// Write quality.json here instead of printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A report.json written by verify or ident.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}
