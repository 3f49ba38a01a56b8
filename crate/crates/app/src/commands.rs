//! One function per subcommand. Each records its inputs, outputs and parameters on the
//! context so a run manifest can be written afterwards, and returns a JSON summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Value};
use voc_core::corpus::{self, DocumentKind};
use voc_core::coverage::{self, BetaBinomialFit, FitMethod, FitReport, IndexedMapping, ResamplingConfig};
use voc_core::dataset::{self, BuildConfig, PositivePair, TrainingExample};
use voc_core::prompt::render_prompt;
use voc_core::study::{
    characteristic_dimensions, render_comparisons_csv, render_disaggregation_csv, ComparisonQuery, StatementRecord,
    StudyDesign, StudyPackage, StudyRegistry,
};
use voc_core::winnow::{self, WinnowItem};
use voc_core::{jsonl, Extraction, PromptStyle};
use voc_gateway::{run_prompts, HttpBackend, PromptedItem};

use crate::cli::*;
use crate::config::{BackendSection, LoadedConfig};
use crate::error::{AppError, AppResult};
use crate::manifest::{self, RunRecorder};

pub const DEFAULT_B: u32 = 50;
pub const DEFAULT_N_MAX: u32 = 80;
pub const DEFAULT_RESAMPLES: u32 = 200;
pub const DEFAULT_NEG_COUNT: usize = 47;
pub const DEFAULT_RATIO: f64 = 0.8;

pub struct Context {
    pub loaded: LoadedConfig,
    pub project_root: PathBuf,
    pub seed: u64,
    /// True when the seed came from a flag or the config rather than the default.
    pub seed_given: bool,
    pub category: Option<String>,
    pub rec: RunRecorder,
}

impl Context {
    pub fn new(loaded: LoadedConfig, cli: &Cli) -> Self {
        let project_root = loaded.project_root(cli.project_root.as_deref());
        let project_root = std::path::absolute(&project_root).unwrap_or(project_root);
        let seed = cli.seed.or(loaded.config.seed);
        let category = cli.category.clone().or_else(|| loaded.config.category.clone());
        Context {
            project_root,
            seed: seed.unwrap_or(0),
            seed_given: seed.is_some(),
            category,
            loaded,
            rec: RunRecorder::default(),
        }
    }

    fn default_path(&self, rel: &str) -> PathBuf {
        self.project_root.join(rel)
    }

    pub(crate) fn study_root(&self, arg: &RootArg) -> PathBuf {
        arg.root
            .clone()
            .or_else(|| self.loaded.config.study.root.clone())
            .unwrap_or_else(|| self.default_path("studies"))
    }

    fn write(&mut self, path: &Path, body: &str) -> AppResult<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
        }
        std::fs::write(path, body).map_err(|e| AppError::io(path, e))?;
        self.rec.output(path);
        Ok(())
    }

    fn write_json(&mut self, path: &Path, value: &impl serde::Serialize) -> AppResult<()> {
        let mut body = serde_json::to_string_pretty(value).expect("serializable");
        body.push('\n');
        self.write(path, &body)
    }
}

pub fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Ingest(_) => "ingest",
        Command::Dataset(DatasetCommand::Build(_)) => "dataset build",
        Command::Dataset(DatasetCommand::Sweep(_)) => "dataset sweep",
        Command::Dataset(DatasetCommand::Score(_)) => "dataset score",
        Command::Extract(_) => "extract",
        Command::Coverage(CoverageCommand::Fit(_)) => "coverage fit",
        Command::Coverage(CoverageCommand::Curve(_)) => "coverage curve",
        Command::Study(StudyCommand::Create(_)) => "study create",
        Command::Study(StudyCommand::Serve(_)) => "study serve",
        Command::Study(StudyCommand::Aggregate(_)) => "study aggregate",
        Command::Study(StudyCommand::Compare(_)) => "study compare",
        Command::Study(StudyCommand::Disaggregate(_)) => "study disaggregate",
        Command::Winnow(WinnowCommand::Suggest(_)) => "winnow suggest",
        Command::Replay(_) => "replay",
    }
}

pub fn execute(command: &Command, ctx: &mut Context) -> AppResult<Value> {
    match command {
        Command::Ingest(a) => ingest(a, ctx),
        Command::Dataset(DatasetCommand::Build(a)) => dataset_build(a, ctx),
        Command::Dataset(DatasetCommand::Sweep(a)) => dataset_sweep(a, ctx),
        Command::Dataset(DatasetCommand::Score(a)) => dataset_score(a, ctx),
        Command::Extract(a) => extract(a, ctx),
        Command::Coverage(CoverageCommand::Fit(a)) => coverage_fit(a, ctx),
        Command::Coverage(CoverageCommand::Curve(a)) => coverage_curve(a, ctx),
        Command::Study(StudyCommand::Create(a)) => study_create(a, ctx),
        Command::Study(StudyCommand::Serve(a)) => crate::server::serve_command(a, ctx),
        Command::Study(StudyCommand::Aggregate(a)) => study_aggregate(a, ctx),
        Command::Study(StudyCommand::Compare(a)) => study_compare(a, ctx),
        Command::Study(StudyCommand::Disaggregate(a)) => study_disaggregate(a, ctx),
        Command::Winnow(WinnowCommand::Suggest(a)) => winnow_suggest(a, ctx),
        Command::Replay(a) => replay(a),
    }
}

fn ingest(a: &IngestArgs, ctx: &mut Context) -> AppResult<Value> {
    let kind = DocumentKind::from(a.kind);
    ctx.rec.input(&a.input);
    ctx.rec.param("kind", kind);
    ctx.rec.param("window", a.window);
    ctx.rec.param("dedup", a.dedup);
    let docs = corpus::ingest_documents(&a.input, kind, ctx.category.as_deref().unwrap_or_default())?;
    let mut verbatims = Vec::new();
    for doc in &docs {
        verbatims.extend(match kind {
            DocumentKind::Review => corpus::segment_sentences(doc)?,
            DocumentKind::Transcript => corpus::chunk_transcript(doc, a.window)?,
        });
    }
    let segmented = verbatims.len();
    if a.dedup {
        verbatims = corpus::dedup_exact(verbatims);
    }
    let labelled = match &a.labels {
        Some(path) => {
            ctx.rec.input(path);
            corpus::apply_labels(&mut verbatims, path)?
        }
        None => 0,
    };
    let out = a.out.clone().unwrap_or_else(|| ctx.default_path("corpus/verbatims.jsonl"));
    corpus::export_verbatims(&out, &verbatims)?;
    ctx.rec.output(&out);
    Ok(json!({
        "documents": docs.len(),
        "verbatims": verbatims.len(),
        "duplicates_dropped": segmented - verbatims.len(),
        "labelled": labelled,
        "out": out,
    }))
}

struct BuildInputsLoaded {
    pairs: Vec<PositivePair>,
    pool: Vec<corpus::Verbatim>,
    ratio: f64,
    probe_count: Option<usize>,
}

fn load_build_inputs(a: &BuildInputs, ctx: &mut Context) -> AppResult<BuildInputsLoaded> {
    ctx.rec.input(&a.positives);
    ctx.rec.input(&a.negatives_pool);
    let pairs: Vec<PositivePair> = jsonl::read(&a.positives)?;
    let pool = corpus::import_verbatims(&a.negatives_pool)?;
    let d = &ctx.loaded.config.dataset;
    let ratio = a.ratio.or(d.ratio).unwrap_or(DEFAULT_RATIO);
    let probe_count = a.probe_count.or(d.probe_count);
    ctx.rec.param("ratio", ratio);
    ctx.rec.param("probe_count", probe_count);
    Ok(BuildInputsLoaded { pairs, pool, ratio, probe_count })
}

fn build_one(inputs: &BuildInputsLoaded, negative_count: usize, dir: &Path, ctx: &mut Context) -> AppResult<Value> {
    let config = BuildConfig {
        category: ctx.category.clone().unwrap_or_default(),
        ratio: inputs.ratio,
        seed: ctx.seed,
        negative_count,
        probe_count: inputs.probe_count,
    };
    let built = dataset::build_dataset(&inputs.pairs, &inputs.pool, &config)?;
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let manifest =
        dataset::export_dataset(&built.split, built.negative, Some(built.pool_size), built.duplicates_dropped, dir)?;
    ctx.rec.output(dir);
    Ok(json!({
        "negative_count": negative_count,
        "counts": manifest.counts,
        "duplicates_dropped": built.duplicates_dropped,
        "out": dir,
    }))
}

fn dataset_build(a: &BuildArgs, ctx: &mut Context) -> AppResult<Value> {
    let inputs = load_build_inputs(&a.inputs, ctx)?;
    let k = a.neg_count.or(ctx.loaded.config.dataset.negative_count).unwrap_or(DEFAULT_NEG_COUNT);
    ctx.rec.param("negative_count", k);
    let out = a.out.clone().unwrap_or_else(|| ctx.default_path("dataset"));
    build_one(&inputs, k, &out, ctx)
}

fn dataset_sweep(a: &SweepArgs, ctx: &mut Context) -> AppResult<Value> {
    let inputs = load_build_inputs(&a.inputs, ctx)?;
    ctx.rec.param("negative_counts", &a.neg_counts);
    let out = a.out.clone().unwrap_or_else(|| ctx.default_path("sweep"));
    let mut runs = Vec::new();
    for &k in &a.neg_counts {
        runs.push(build_one(&inputs, k, &out.join(format!("neg-{k}")), ctx)?);
    }
    let summary = json!({ "seed": ctx.seed, "runs": runs });
    ctx.write_json(&out.join("sweep.json"), &summary)?;
    Ok(summary)
}

fn split_of(split: dataset::DatasetSplit, which: SplitArg) -> Vec<TrainingExample> {
    match which {
        SplitArg::Train => split.train,
        SplitArg::Validation => split.validation,
        SplitArg::Probe => split.probe,
    }
}

fn dataset_score(a: &ScoreArgs, ctx: &mut Context) -> AppResult<Value> {
    ctx.rec.input(&a.dataset);
    ctx.rec.input(&a.responses);
    ctx.rec.param("split", format!("{:?}", a.split).to_lowercase());
    let gold = split_of(dataset::import_dataset(&a.dataset)?, a.split);
    let responses: Vec<Extraction> = jsonl::read(&a.responses)?;
    let report = dataset::score_validation(&responses, &gold)?;
    let out = a.out.clone().unwrap_or_else(|| ctx.default_path("validation_report.json"));
    ctx.write_json(&out, &report)?;
    Ok(serde_json::to_value(report).expect("report serializes"))
}

fn extract(a: &ExtractArgs, ctx: &mut Context) -> AppResult<Value> {
    let style = PromptStyle::from(a.style);
    let overrides = BackendSection {
        endpoint_url: a.endpoint.clone(),
        model_name: a.model.clone(),
        max_in_flight: a.max_in_flight,
        timeout_secs: a.timeout,
        max_retries: a.max_retries,
        ..Default::default()
    };
    let config = ctx.loaded.backend(&overrides)?;
    ctx.rec.param("style", style);
    ctx.rec.param("endpoint_url", &config.endpoint_url);
    ctx.rec.param("model_name", &config.model_name);
    ctx.rec.param("max_in_flight", config.max_in_flight);
    ctx.rec.param("max_retries", config.max_retries);
    ctx.rec.param("decoding", &config.decoding);

    let items: Vec<PromptedItem> = if let Some(dir) = &a.dataset {
        ctx.rec.input(dir);
        ctx.rec.param("split", format!("{:?}", a.split).to_lowercase());
        split_of(dataset::import_dataset(dir)?, a.split)
            .into_iter()
            .map(|e| PromptedItem { id: e.example_id, prompt: Ok(e.question) })
            .collect()
    } else {
        let input = a.input.as_ref().expect("clap requires --input or --dataset");
        ctx.rec.input(input);
        let fallback = ctx.category.clone().unwrap_or_default();
        corpus::import_verbatims(input)?
            .into_iter()
            .map(|v| {
                let category = if v.category.trim().is_empty() { fallback.as_str() } else { v.category.as_str() };
                PromptedItem { prompt: render_prompt(style, category, &v.text).map_err(|e| e.to_string()), id: v.verbatim_id }
            })
            .collect()
    };
    let settings = config.batch_settings();
    let backend = HttpBackend::new(config)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| AppError::backend(format!("runtime: {e}")))?;
    let output = runtime.block_on(run_prompts(&backend, &items, style, settings))?;

    let out = a.out.clone().unwrap_or_else(|| ctx.default_path("extractions.jsonl"));
    jsonl::write(&out, &output.extractions)?;
    ctx.rec.output(&out);
    ctx.rec.param("stats", &output.stats);
    let stats = &output.stats;
    if stats.failures > 0 {
        return Err(AppError::backend(format!(
            "{} of {} items failed; partial output with per-item errors written to {}",
            stats.failures,
            stats.items,
            out.display()
        )));
    }
    Ok(json!({ "stats": stats, "out": out }))
}

fn fit_settings(ctx: &Context, b: Option<u32>, m: Option<u32>) -> (u32, u32) {
    let c = &ctx.loaded.config.coverage;
    (b.or(c.b).unwrap_or(DEFAULT_B), m.or(c.m).unwrap_or(ResamplingConfig::DEFAULT_M))
}

fn load_indexed(mapping: &Path, universe: &Path, ctx: &mut Context) -> AppResult<IndexedMapping> {
    ctx.rec.input(mapping);
    ctx.rec.input(universe);
    let mapping = coverage::read_mapping(mapping)?;
    let universe = coverage::read_universe(universe)?;
    Ok(IndexedMapping::new(&mapping, &universe)?)
}

fn run_fit(indexed: &IndexedMapping, b: u32, m: u32, method: FitMethod, ctx: &mut Context) -> AppResult<FitReport> {
    ctx.rec.param("b", b);
    ctx.rec.param("m", m);
    ctx.rec.param("method", method);
    let counts = coverage::resample_indexed(indexed, ResamplingConfig { b, m, seed: ctx.seed });
    let fit = coverage::fit_with(&counts, method)?;
    Ok(FitReport::new(&fit, &counts, ctx.seed, indexed.statements.len()))
}

fn coverage_fit(a: &FitArgs, ctx: &mut Context) -> AppResult<Value> {
    let (b, m) = fit_settings(ctx, a.b, a.m);
    let method = a.method.map(FitMethod::from).or(ctx.loaded.config.coverage.method).unwrap_or_default();
    let indexed = load_indexed(&a.mapping, &a.universe, ctx)?;
    let report = run_fit(&indexed, b, m, method, ctx)?;
    let out = a.out.clone().unwrap_or_else(|| ctx.default_path("coverage/fit.json"));
    ctx.write_json(&out, &report)?;
    Ok(serde_json::to_value(report).expect("report serializes"))
}

fn coverage_curve(a: &CurveArgs, ctx: &mut Context) -> AppResult<Value> {
    let c = ctx.loaded.config.coverage.clone();
    let n_max = a.n_max.or(c.n_max).unwrap_or(DEFAULT_N_MAX);
    let resamples = a.resamples.or(c.resamples).unwrap_or(DEFAULT_RESAMPLES);
    ctx.rec.param("n_max", n_max);
    ctx.rec.param("resamples", resamples);
    let indexed = match (&a.mapping, &a.universe) {
        (Some(m), Some(u)) => Some(load_indexed(m, u, ctx)?),
        _ => None,
    };
    let (b, m) = fit_settings(ctx, a.b, a.m);
    let fit = match (a.alpha, a.beta, &a.fit) {
        (Some(alpha), Some(beta), _) => {
            ctx.rec.param("alpha", alpha);
            ctx.rec.param("beta", beta);
            ctx.rec.param("b", b);
            BetaBinomialFit {
                alpha,
                beta,
                b,
                m,
                log_likelihood: 0.0,
                converged: true,
                method: FitMethod::Counts,
                iterations: 0,
                gradient_norm: 0.0,
                note: Some("parameters fixed on the command line".into()),
            }
        }
        (_, _, Some(path)) => {
            ctx.rec.input(path);
            let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
            let report: FitReport = serde_json::from_str(&text)
                .map_err(|e| AppError::data("coverage", format!("coverage: fit report {}: {e}", path.display())))?;
            if a.b.is_some_and(|b| b != report.b) {
                return Err(AppError::usage(format!("--b {} disagrees with the fit's block size {}", a.b.unwrap(), report.b)));
            }
            report.to_fit()
        }
        _ => match &indexed {
            Some(indexed) => {
                let method = c.method.unwrap_or_default();
                run_fit(indexed, b, m, method, ctx)?.to_fit()
            }
            None => return Err(AppError::usage("coverage curve needs --alpha/--beta, --fit, or --mapping/--universe")),
        },
    };
    let curve = coverage::coverage_curve(&fit, indexed.as_ref(), n_max, resamples, ctx.seed)?;
    let out = a.out.clone().unwrap_or_else(|| ctx.default_path("coverage/curve.csv"));
    ctx.write(&out, &coverage::render_curve_csv(&curve))?;
    let (last_n, last_e) = *curve.points.last().expect("n_max >= 1");
    Ok(json!({
        "alpha": fit.alpha,
        "beta": fit.beta,
        "b": fit.b,
        "n_max": last_n,
        "statements": u64::from(last_n) * u64::from(fit.b),
        "expected_at_n_max": last_e,
        "out": out,
    }))
}

fn read_design(path: &Path) -> AppResult<StudyDesign> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let bad = |e: String| AppError::data("invalid_design", format!("study: design {}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| bad(e.to_string()))
    } else {
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
    }
}

/// Statement files carry `verbatim_id` and `statement`; extraction records qualify, with
/// failed items treated as producing nothing.
#[derive(Deserialize)]
struct StatementLine {
    verbatim_id: String,
    #[serde(default)]
    statement: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

fn study_create(a: &CreateArgs, ctx: &mut Context) -> AppResult<Value> {
    ctx.rec.input(&a.design);
    ctx.rec.input(&a.corpus);
    let mut design = read_design(&a.design)?;
    if ctx.seed_given {
        design.seed = ctx.seed;
    }
    if a.with_characteristics {
        for d in characteristic_dimensions() {
            if !design.dimensions.iter().any(|x| x.id == d.id) {
                design.dimensions.push(d);
            }
        }
    }
    ctx.rec.seed = Some(design.seed);
    let corpus = corpus::import_verbatims(&a.corpus)?;
    let mut statements = Vec::new();
    let mut seen_methods = BTreeMap::new();
    for spec in &a.statements {
        let Some((method, path)) = spec.split_once('=') else {
            return Err(AppError::usage(format!("--statements expects METHOD=PATH, got {spec:?}")));
        };
        if seen_methods.insert(method.to_owned(), ()).is_some() {
            return Err(AppError::usage(format!("method {method:?} given twice")));
        }
        let path = PathBuf::from(path);
        ctx.rec.input(&path);
        for line in jsonl::read::<StatementLine>(&path)? {
            let statement = if line.error.is_some() { None } else { line.statement };
            statements.push(StatementRecord { verbatim_id: line.verbatim_id, method: method.to_owned(), statement });
        }
    }
    let decoy_pool = match &a.decoys {
        Some(path) => {
            ctx.rec.input(path);
            let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
            text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect()
        }
        None => Vec::new(),
    };
    let root = ctx.study_root(&a.root);
    ctx.rec.param("root", &root);
    ctx.rec.param("with_characteristics", a.with_characteristics);
    let package = StudyPackage { design, corpus, statements, decoy_pool };
    let registry = StudyRegistry::new(&root);
    let id = registry.create(&package)?;
    let dir = root.join(&id);
    ctx.rec.output(&dir.join(voc_core::study::DESIGN_FILE));
    ctx.rec.output(&dir.join(voc_core::study::BALLOTS_FILE));
    Ok(json!({
        "study": id,
        "dir": dir,
        "ballots": registry.all_progress(&id)?.iter().map(|p| p.total).sum::<usize>(),
    }))
}

fn record_store(ctx: &mut Context, root: &Path, study: &str) {
    let dir = root.join(study);
    for f in [
        voc_core::study::DESIGN_FILE,
        voc_core::study::BALLOTS_FILE,
        voc_core::study::RATINGS_FILE,
    ] {
        ctx.rec.input(&dir.join(f));
    }
    ctx.rec.param("study", study);
}

fn study_aggregate(a: &AggregateArgs, ctx: &mut Context) -> AppResult<Value> {
    let root = ctx.study_root(&a.common.root);
    let study = &a.common.study;
    let registry = StudyRegistry::new(&root);
    let judgments = registry.aggregate(study, a.partial)?;
    let ratings = registry.ratings(study)?;
    record_store(ctx, &root, study);
    ctx.rec.param("partial", a.partial);
    let out = a.common.out.clone().unwrap_or_else(|| ctx.default_path(&format!("reports/{study}")));
    let judgments_path = out.join("judgments.jsonl");
    let ratings_path = out.join("ratings.jsonl");
    jsonl::write(&judgments_path, &judgments)?;
    jsonl::write(&ratings_path, &ratings)?;
    ctx.rec.output(&judgments_path);
    ctx.rec.output(&ratings_path);
    Ok(json!({ "study": study, "judgments": judgments.len(), "ratings": ratings.len(), "out": out }))
}

fn study_compare(a: &CompareArgs, ctx: &mut Context) -> AppResult<Value> {
    let root = ctx.study_root(&a.common.root);
    let study = &a.common.study;
    let query = ComparisonQuery { test: a.test.into(), decoys: a.decoys.map(Into::into), partial: a.partial };
    let results = StudyRegistry::new(&root).comparisons(study, query)?;
    record_store(ctx, &root, study);
    ctx.rec.param("test", query.test);
    ctx.rec.param("decoys", query.decoys.map(|d| d.as_str()));
    ctx.rec.param("partial", a.partial);
    let out = a.common.out.clone().unwrap_or_else(|| ctx.default_path(&format!("reports/{study}/comparisons.csv")));
    ctx.write(&out, &render_comparisons_csv(&results))?;
    Ok(json!({ "study": study, "comparisons": results.len(), "out": out }))
}

fn study_disaggregate(a: &StudyOutArgs, ctx: &mut Context) -> AppResult<Value> {
    let root = ctx.study_root(&a.root);
    let rows = StudyRegistry::new(&root).disaggregation(&a.study)?;
    record_store(ctx, &root, &a.study);
    let out = a.out.clone().unwrap_or_else(|| ctx.default_path(&format!("reports/{}/disaggregation.csv", a.study)));
    ctx.write(&out, &render_disaggregation_csv(&rows))?;
    Ok(json!({ "study": a.study, "rows": rows.len(), "out": out }))
}

fn winnow_suggest(a: &SuggestArgs, ctx: &mut Context) -> AppResult<Value> {
    ctx.rec.input(&a.input);
    ctx.rec.param("threshold", a.threshold);
    let is_jsonl = a.input.extension().is_some_and(|e| e == "jsonl" || e == "json");
    let items: Vec<WinnowItem> = if is_jsonl {
        jsonl::read(&a.input)?
    } else {
        let text = std::fs::read_to_string(&a.input).map_err(|e| AppError::io(&a.input, e))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| WinnowItem { id: format!("s{:04}", i + 1), text: l.trim().to_owned() })
            .collect()
    };
    let groups = winnow::group_near_duplicates(&items, a.threshold)?;
    let out = a.out.clone().unwrap_or_else(|| ctx.default_path("winnow/worksheet.csv"));
    ctx.write(&out, &winnow::render_worksheet_csv(&groups, &items))?;
    Ok(json!({
        "statements": items.len(),
        "groups": groups.len(),
        "duplicate_groups": groups.iter().filter(|g| g.members.len() > 1).count(),
        "out": out,
    }))
}

fn replay(a: &ReplayArgs) -> AppResult<Value> {
    let recorded = manifest::read_manifest(&a.manifest)?;
    let cwd = &recorded.cwd;
    let mut changed = manifest::stale(cwd, &recorded.inputs);
    if let Some(config) = &recorded.config {
        changed.extend(manifest::stale(cwd, std::slice::from_ref(config)));
    }
    if !changed.is_empty() {
        let list: Vec<String> = changed.iter().map(|(p, why)| format!("{}: {why}", p.display())).collect();
        return Err(AppError::data("inputs_changed", format!("replay: inputs differ from the recording: {}", list.join("; "))));
    }
    let exe = std::env::current_exe().map_err(|e| AppError::usage(format!("replay: cannot locate own binary: {e}")))?;
    let status = std::process::Command::new(exe)
        .args(&recorded.argv)
        .current_dir(cwd)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| AppError::usage(format!("replay: cannot run: {e}")))?;
    let code = status.code().unwrap_or(-1);
    if code != recorded.exit_code {
        return Err(AppError::data(
            "replay_failed",
            format!("replay: exit status {code}, recorded {}", recorded.exit_code),
        ));
    }
    let differing = manifest::stale(cwd, &recorded.outputs);
    if !differing.is_empty() {
        let list: Vec<String> = differing.iter().map(|(p, why)| format!("{}: {why}", p.display())).collect();
        return Err(AppError::data("replay_mismatch", format!("replay: outputs differ: {}", list.join("; "))));
    }
    Ok(json!({ "command": recorded.command, "reproduced": true, "outputs": recorded.outputs.len() }))
}
