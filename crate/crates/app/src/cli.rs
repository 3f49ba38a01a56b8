use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use voc_core::coverage::FitMethod;
use voc_core::study::{DecoyPolicy, TestKind};
use voc_core::{DocumentKind, PromptStyle};

#[derive(Debug, Parser)]
#[command(name = "voc", version, about = "Customer-need extraction workflows and blind evaluation studies")]
pub struct Cli {
    /// Project config file (default: ./voc.toml when present).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory that receives default artifact paths and run manifests.
    #[arg(long, global = true)]
    pub project_root: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Product category used in prompts when a record does not carry its own.
    #[arg(long, global = true)]
    pub category: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment reviews or transcripts into verbatims.
    Ingest(IngestArgs),
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Send verbatims (or a dataset split) to a model backend.
    Extract(ExtractArgs),
    #[command(subcommand)]
    Coverage(CoverageCommand),
    #[command(subcommand)]
    Study(StudyCommand),
    #[command(subcommand)]
    Winnow(WinnowCommand),
    /// Re-execute a recorded run and check that it reproduces its outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Review,
    Transcript,
}

impl From<KindArg> for DocumentKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Review => DocumentKind::Review,
            KindArg::Transcript => DocumentKind::Transcript,
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Review JSON Lines file, transcript text file, or a directory of either.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "review")]
    pub kind: KindArg,
    /// JSON Lines of {verbatim_id, label} annotations.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Sentences per transcript chunk.
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    /// Drop exact duplicate sentences, keeping the first.
    #[arg(long)]
    pub dedup: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Build train/validation/probe files with negative sampling.
    Build(BuildArgs),
    /// Build one dataset per negative count.
    Sweep(SweepArgs),
    /// Score model answers on a dataset split.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct BuildInputs {
    /// JSON Lines of {verbatim_id, text, cn} pairs.
    #[arg(long)]
    pub positives: PathBuf,
    /// Verbatims JSON Lines to draw negatives from.
    #[arg(long)]
    pub negatives_pool: PathBuf,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub probe_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub inputs: BuildInputs,
    #[arg(long)]
    pub neg_count: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub inputs: BuildInputs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub neg_counts: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Probe,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Extraction records whose ids are the dataset example ids.
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long, value_enum, default_value = "validation")]
    pub split: SplitArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    Base,
    Sft,
}

impl From<StyleArg> for PromptStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Base => PromptStyle::Base,
            StyleArg::Sft => PromptStyle::Sft,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Verbatims JSON Lines.
    #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
    pub input: Option<PathBuf>,
    /// Dataset directory; its questions are sent as-is.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "validation", requires = "dataset")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "sft")]
    pub style: StyleArg,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Counts,
    PointEstimates,
}

impl From<MethodArg> for FitMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Counts => FitMethod::Counts,
            MethodArg::PointEstimates => FitMethod::PointEstimates,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum CoverageCommand {
    /// Resample blocks and fit the beta-binomial model.
    Fit(FitArgs),
    /// Expected (and optionally observed) coverage by number of statements.
    Curve(CurveArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// JSON Lines of {statement_id, cn_ids}.
    #[arg(long)]
    pub mapping: PathBuf,
    /// Need ids, one per line.
    #[arg(long)]
    pub universe: PathBuf,
    #[arg(long)]
    pub b: Option<u32>,
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, requires = "universe")]
    pub mapping: Option<PathBuf>,
    #[arg(long, requires = "mapping")]
    pub universe: Option<PathBuf>,
    /// Fit report from `coverage fit`.
    #[arg(long, conflicts_with_all = ["alpha", "beta"])]
    pub fit: Option<PathBuf>,
    #[arg(long, requires = "beta")]
    pub alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    pub beta: Option<f64>,
    #[arg(long)]
    pub b: Option<u32>,
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long)]
    pub n_max: Option<u32>,
    /// Resamples for the observed curve; 0 disables it.
    #[arg(long)]
    pub resamples: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    /// Sample items, assemble blinded ballots and initialise the study store.
    Create(CreateArgs),
    /// Serve the rater and admin HTTP API.
    Serve(ServeArgs),
    /// Majority verdicts per item, method and dimension.
    Aggregate(AggregateArgs),
    /// Pairwise method comparisons.
    Compare(CompareArgs),
    /// Per-label, per-method yes rates across raters.
    Disaggregate(StudyOutArgs),
}

#[derive(Debug, Args)]
pub struct RootArg {
    /// Study store directory.
    #[arg(long)]
    pub root: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CreateArgs {
    /// Study design, JSON or TOML.
    #[arg(long)]
    pub design: PathBuf,
    /// Labelled verbatims to sample from.
    #[arg(long)]
    pub corpus: PathBuf,
    /// `method=path` to JSON Lines of {verbatim_id, statement}; repeat per method.
    #[arg(long = "statements", value_name = "METHOD=PATH", required = true)]
    pub statements: Vec<String>,
    /// Real need statements, one per line, used where a method produced nothing.
    #[arg(long)]
    pub decoys: Option<PathBuf>,
    /// Also ask the characteristic dimensions.
    #[arg(long)]
    pub with_characteristics: bool,
    #[command(flatten)]
    pub root: RootArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    /// Rater UI bundle served at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    /// JSON object of rater id → token; when given, rater routes need `Authorization: Bearer`.
    #[arg(long)]
    pub rater_tokens: Option<PathBuf>,
    #[command(flatten)]
    pub root: RootArg,
}

#[derive(Debug, Args)]
pub struct StudyOutArgs {
    #[arg(long)]
    pub study: String,
    #[command(flatten)]
    pub root: RootArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub common: StudyOutArgs,
    /// Aggregate whatever has been rated so far.
    #[arg(long)]
    pub partial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestArg {
    McnemarExact,
    TwoProportion,
}

impl From<TestArg> for TestKind {
    fn from(t: TestArg) -> Self {
        match t {
            TestArg::McnemarExact => TestKind::McnemarExact,
            TestArg::TwoProportion => TestKind::TwoProportion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecoyArg {
    Include,
    Exclude,
}

impl From<DecoyArg> for DecoyPolicy {
    fn from(d: DecoyArg) -> Self {
        match d {
            DecoyArg::Include => DecoyPolicy::Include,
            DecoyArg::Exclude => DecoyPolicy::Exclude,
        }
    }
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: StudyOutArgs,
    #[arg(long, value_enum, default_value = "mcnemar-exact")]
    pub test: TestArg,
    /// Override each dimension's own decoy policy.
    #[arg(long, value_enum)]
    pub decoys: Option<DecoyArg>,
    #[arg(long)]
    pub partial: bool,
}

#[derive(Debug, Subcommand)]
pub enum WinnowCommand {
    /// Group near-duplicate statements into a review worksheet.
    Suggest(SuggestArgs),
}

#[derive(Debug, Args)]
pub struct SuggestArgs {
    /// JSON Lines of {id, text}, or plain text with one statement per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = voc_core::winnow::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn documented_invocations_parse() {
        for argv in [
            "voc dataset build --positives p.jsonl --negatives-pool n.jsonl --neg-count 47 --ratio 0.8 --seed 7",
            "voc coverage curve --mapping m.jsonl --universe cn.txt --b 50 --n-max 80 --alpha 1.054 --beta 3.133",
            "voc dataset sweep --positives p --negatives-pool n --neg-counts 0,47,94",
            "voc study create --design d.toml --corpus c.jsonl --statements human=h.jsonl --statements sft=s.jsonl",
            "voc extract --input v.jsonl --endpoint http://h --model m --max-retries 0",
        ] {
            Cli::try_parse_from(argv.split(' ')).unwrap_or_else(|e| panic!("{argv}: {e}"));
        }
        assert!(Cli::try_parse_from(["voc", "coverage", "curve", "--alpha", "1"]).is_err());
        assert!(Cli::try_parse_from(["voc", "extract"]).is_err());
    }
}
