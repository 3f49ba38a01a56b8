//! Fine-tuning dataset construction.
//!
//! Positives pair a verbatim with the need an analyst extracted from it; negatives pair an
//! uninformative sentence with the empty marker. Positives are split into train and
//! validation; sampled negatives go to train, and a disjoint probe set of negatives is held
//! out so that both false negatives and spurious answers can be measured on held-out data.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Verbatim;
use crate::extraction::Extraction;
use crate::jsonl::{self, JsonlError};
use crate::prompt::{self, PromptError, EMPTY_MARKER};
use crate::seeding::stream_rng;

pub const TRAIN_FILE: &str = "train.jsonl";
pub const VALIDATION_FILE: &str = "validation.jsonl";
pub const PROBE_FILE: &str = "probe.jsonl";
pub const PROVENANCE_FILE: &str = "provenance.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("customer-need text must not be empty")]
    EmptyAnswer,
    #[error("customer-need text for {0:?} spans several lines")]
    MultilineAnswer(String),
    #[error("customer-need text for {0:?} is the empty marker")]
    MarkerAsPositive(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("requested {requested} negatives but the pool holds {available}")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("split ratio {0} is outside (0, 1)")]
    RatioOutOfRange(f64),
    #[error("example {0:?} has the wrong polarity for its list")]
    WrongPolarity(String),
    #[error("duplicate example id {0:?}")]
    DuplicateExample(String),
    #[error("responses and gold examples are misaligned: {0}")]
    Misaligned(String),
    #[error(transparent)]
    Io(#[from] JsonlError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("invalid dataset directory: {0}")]
    InvalidArtifact(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub example_id: String,
    pub question: String,
    pub answer: String,
    pub polarity: Polarity,
    pub source_verbatim_id: String,
    pub category: String,
}

fn example_id(polarity: Polarity, verbatim_id: &str, answer: &str) -> String {
    let mut h = Sha256::new();
    h.update(verbatim_id.as_bytes());
    h.update([0]);
    h.update(answer.as_bytes());
    let digest = h.finalize();
    let mut id = String::from(match polarity {
        Polarity::Positive => "pos-",
        Polarity::Negative => "neg-",
    });
    for b in &digest[..8] {
        let _ = write!(id, "{b:02x}");
    }
    id
}

pub fn make_positive_example(
    verbatim: &Verbatim,
    cn_text: &str,
    category: &str,
) -> Result<TrainingExample, DatasetError> {
    let answer = cn_text.trim();
    if answer.is_empty() {
        return Err(DatasetError::EmptyAnswer);
    }
    if answer.contains(['\n', '\r']) {
        return Err(DatasetError::MultilineAnswer(verbatim.verbatim_id.clone()));
    }
    if answer == EMPTY_MARKER {
        return Err(DatasetError::MarkerAsPositive(verbatim.verbatim_id.clone()));
    }
    Ok(TrainingExample {
        example_id: example_id(Polarity::Positive, &verbatim.verbatim_id, answer),
        question: prompt::render_prompt_sft(category, &verbatim.text)?,
        answer: answer.to_owned(),
        polarity: Polarity::Positive,
        source_verbatim_id: verbatim.verbatim_id.clone(),
        category: category.to_owned(),
    })
}

pub fn make_negative_example(verbatim: &Verbatim, category: &str) -> Result<TrainingExample, DatasetError> {
    Ok(TrainingExample {
        example_id: example_id(Polarity::Negative, &verbatim.verbatim_id, EMPTY_MARKER),
        question: prompt::render_prompt_sft(category, &verbatim.text)?,
        answer: EMPTY_MARKER.to_owned(),
        polarity: Polarity::Negative,
        source_verbatim_id: verbatim.verbatim_id.clone(),
        category: category.to_owned(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeSamplingConfig {
    pub count: usize,
    pub seed: u64,
}

/// Draws `config.count` distinct verbatims uniformly without replacement.
pub fn sample_negatives(pool: &[Verbatim], config: NegativeSamplingConfig) -> Result<Vec<Verbatim>, DatasetError> {
    if config.count > pool.len() {
        return Err(DatasetError::PoolTooSmall { requested: config.count, available: pool.len() });
    }
    let mut rng = stream_rng(config.seed, "negatives", 0);
    Ok(index::sample(&mut rng, pool.len(), config.count)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<TrainingExample>,
    pub validation: Vec<TrainingExample>,
    /// Held-out negatives, disjoint from the ones in `train`.
    #[serde(default)]
    pub probe: Vec<TrainingExample>,
    pub seed: u64,
    pub ratio: f64,
}

impl DatasetSplit {
    pub fn train_positive_count(&self) -> usize {
        self.train.iter().filter(|e| e.polarity == Polarity::Positive).count()
    }

    pub fn train_negative_count(&self) -> usize {
        self.train.len() - self.train_positive_count()
    }
}

/// Number of training positives for `n` positives at `ratio`, rounding halves up.
pub fn train_size(n: usize, ratio: f64) -> usize {
    // the epsilon keeps exact halves such as 2.5 from rounding down after representation error
    ((ratio * n as f64) + 0.5 + 1e-9).floor() as usize
}

fn check_unique<'a>(examples: impl IntoIterator<Item = &'a TrainingExample>) -> Result<(), DatasetError> {
    let mut seen = HashSet::new();
    for e in examples {
        if !seen.insert(e.example_id.as_str()) {
            return Err(DatasetError::DuplicateExample(e.example_id.clone()));
        }
    }
    Ok(())
}

/// Shuffles positives under `seed` and cuts them at `train_size(N, ratio)`; every negative is
/// appended to the training side.
pub fn split_dataset(
    mut positives: Vec<TrainingExample>,
    negatives: Vec<TrainingExample>,
    ratio: f64,
    seed: u64,
) -> Result<DatasetSplit, DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::RatioOutOfRange(ratio));
    }
    if let Some(e) = positives.iter().find(|e| e.polarity != Polarity::Positive) {
        return Err(DatasetError::WrongPolarity(e.example_id.clone()));
    }
    if let Some(e) = negatives.iter().find(|e| e.polarity != Polarity::Negative) {
        return Err(DatasetError::WrongPolarity(e.example_id.clone()));
    }
    check_unique(positives.iter().chain(&negatives))?;
    // canonical order first so membership depends on the set and the seed only
    positives.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    positives.shuffle(&mut stream_rng(seed, "split", 0));
    let cut = train_size(positives.len(), ratio);
    let validation = positives.split_off(cut);
    let mut train = positives;
    train.extend(negatives);
    Ok(DatasetSplit { train, validation, probe: Vec::new(), seed, ratio })
}

/// A verbatim paired with the need extracted from it; the input format for positives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositivePair {
    pub verbatim_id: String,
    pub text: String,
    pub cn: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub category: String,
    pub ratio: f64,
    pub seed: u64,
    pub negative_count: usize,
    /// Held-out negatives; defaults to `negative_count` when absent.
    pub probe_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltDataset {
    pub split: DatasetSplit,
    pub negative: NegativeSamplingConfig,
    pub pool_size: usize,
    pub duplicates_dropped: usize,
}

/// Full pipeline from pairs and a negative pool to a split with a probe set.
pub fn build_dataset(pairs: &[PositivePair], pool: &[Verbatim], config: &BuildConfig) -> Result<BuiltDataset, DatasetError> {
    let mut seen = HashSet::new();
    let mut positives = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let category = pair.category.as_deref().unwrap_or(&config.category);
        let verbatim = Verbatim {
            verbatim_id: pair.verbatim_id.clone(),
            doc_id: String::new(),
            ordinal: 0,
            text: pair.text.clone(),
            category: category.to_owned(),
            label: Default::default(),
        };
        let example = make_positive_example(&verbatim, &pair.cn, category)?;
        if seen.insert(example.example_id.clone()) {
            positives.push(example);
        }
    }
    let duplicates_dropped = pairs.len() - positives.len();

    let probe_count = config.probe_count.unwrap_or(config.negative_count);
    let negative = NegativeSamplingConfig { count: config.negative_count, seed: config.seed };
    let drawn = sample_negatives(pool, NegativeSamplingConfig { count: config.negative_count + probe_count, seed: config.seed })?;
    let to_examples = |vs: &[Verbatim]| -> Result<Vec<TrainingExample>, DatasetError> {
        vs.iter()
            .map(|v| make_negative_example(v, if v.category.is_empty() { &config.category } else { &v.category }))
            .collect()
    };
    let (train_neg, probe_neg) = drawn.split_at(config.negative_count);
    let mut split = split_dataset(positives, to_examples(train_neg)?, config.ratio, config.seed)?;
    split.probe = to_examples(probe_neg)?;
    check_unique(split.train.iter().chain(&split.validation).chain(&split.probe))?;
    Ok(BuiltDataset { split, negative, pool_size: pool.len(), duplicates_dropped })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub positives: usize,
    pub negatives: usize,
    pub false_negatives: usize,
    pub spurious: usize,
    pub failed: usize,
    /// Fraction of positives answered with the empty marker.
    pub false_negative_rate: Option<f64>,
    /// Fraction of negatives answered with anything but the empty marker.
    pub spurious_rate: Option<f64>,
}

/// Scores model answers against gold examples matched by id (`Extraction::verbatim_id`
/// carries the example id). Failed requests are counted but excluded from both rates.
pub fn score_validation(responses: &[Extraction], gold: &[TrainingExample]) -> Result<ValidationReport, DatasetError> {
    let mut by_id: HashMap<&str, &Extraction> = HashMap::with_capacity(responses.len());
    for r in responses {
        if by_id.insert(r.verbatim_id.as_str(), r).is_some() {
            return Err(DatasetError::Misaligned(format!("duplicate response for {:?}", r.verbatim_id)));
        }
    }
    if responses.len() != gold.len() {
        return Err(DatasetError::Misaligned(format!("{} responses for {} examples", responses.len(), gold.len())));
    }
    let mut report = ValidationReport::default();
    for example in gold {
        let response = by_id
            .get(example.example_id.as_str())
            .ok_or_else(|| DatasetError::Misaligned(format!("no response for {:?}", example.example_id)))?;
        if response.is_failure() {
            report.failed += 1;
            continue;
        }
        let abstained = response.statement.is_none();
        match example.polarity {
            Polarity::Positive => {
                report.positives += 1;
                report.false_negatives += usize::from(abstained);
            }
            Polarity::Negative => {
                report.negatives += 1;
                report.spurious += usize::from(!abstained);
            }
        }
    }
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    report.false_negative_rate = rate(report.false_negatives, report.positives);
    report.spurious_rate = rate(report.spurious, report.negatives);
    Ok(report)
}

/// Training hyperparameters handed to the external fine-tuning job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub base_model: String,
    pub precision: String,
    pub quantization: Option<String>,
    pub epochs: u32,
    pub per_device_train_batch_size: u32,
    pub per_device_eval_batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub learning_rate: f64,
    pub lr_scheduler: String,
    pub max_seq_length: u32,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            base_model: "vicuna-13b".into(),
            precision: "bf16".into(),
            quantization: None,
            epochs: 6,
            per_device_train_batch_size: 2,
            per_device_eval_batch_size: 8,
            gradient_accumulation_steps: 4,
            learning_rate: 2e-5,
            lr_scheduler: "cosine".into(),
            max_seq_length: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub train: usize,
    pub train_positive: usize,
    pub train_negative: usize,
    pub validation: usize,
    pub probe: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeManifest {
    pub count: usize,
    pub probe_count: usize,
    pub seed: u64,
    pub pool_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub counts: DatasetCounts,
    pub seed: u64,
    pub ratio: f64,
    pub negative_sampling: NegativeManifest,
    pub duplicates_dropped: usize,
    pub files: BTreeMap<String, String>,
    pub hyperparameters: Hyperparameters,
}

#[derive(Serialize, Deserialize)]
struct DatasetRecord {
    question: String,
    answer: String,
}

#[derive(Serialize, Deserialize)]
struct ProvenanceRecord {
    file: String,
    example_id: String,
    source_verbatim_id: String,
}

/// Writes the train, validation and probe files plus provenance and a manifest into `dir`.
pub fn export_dataset(
    split: &DatasetSplit,
    negative: NegativeSamplingConfig,
    pool_size: Option<usize>,
    duplicates_dropped: usize,
    dir: &Path,
) -> Result<DatasetManifest, DatasetError> {
    let sets = [(TRAIN_FILE, &split.train), (VALIDATION_FILE, &split.validation), (PROBE_FILE, &split.probe)];
    let mut provenance = Vec::new();
    for (file, examples) in sets {
        jsonl::write(
            &dir.join(file),
            examples.iter().map(|e| DatasetRecord { question: e.question.clone(), answer: e.answer.clone() }),
        )?;
        provenance.extend(examples.iter().map(|e| ProvenanceRecord {
            file: file.to_owned(),
            example_id: e.example_id.clone(),
            source_verbatim_id: e.source_verbatim_id.clone(),
        }));
    }
    jsonl::write(&dir.join(PROVENANCE_FILE), provenance)?;

    let files = [("train", TRAIN_FILE), ("validation", VALIDATION_FILE), ("probe", PROBE_FILE), ("provenance", PROVENANCE_FILE)]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
    let manifest = DatasetManifest {
        format_version: 1,
        counts: DatasetCounts {
            train: split.train.len(),
            train_positive: split.train_positive_count(),
            train_negative: split.train_negative_count(),
            validation: split.validation.len(),
            probe: split.probe.len(),
        },
        seed: split.seed,
        ratio: split.ratio,
        negative_sampling: NegativeManifest {
            count: negative.count,
            probe_count: split.probe.len(),
            seed: negative.seed,
            pool_size,
        },
        duplicates_dropped,
        files,
        hyperparameters: Hyperparameters::default(),
    };
    let path = dir.join(MANIFEST_FILE);
    let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    body.push('\n');
    std::fs::write(&path, body).map_err(|source| DatasetError::Write { path, source })?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|source| JsonlError::Read { path: path.clone(), source })?;
    serde_json::from_str(&text).map_err(|e| DatasetError::InvalidArtifact(format!("{}: {e}", path.display())))
}

/// Reads a directory written by [`export_dataset`] back into a split.
pub fn import_dataset(dir: &Path) -> Result<DatasetSplit, DatasetError> {
    let manifest = read_manifest(dir)?;
    let provenance: Vec<ProvenanceRecord> = jsonl::read(&dir.join(PROVENANCE_FILE))?;
    let mut by_file: HashMap<&str, Vec<&ProvenanceRecord>> = HashMap::new();
    for p in &provenance {
        by_file.entry(p.file.as_str()).or_default().push(p);
    }
    let load = |file: &str| -> Result<Vec<TrainingExample>, DatasetError> {
        let records: Vec<DatasetRecord> = jsonl::read(&dir.join(file))?;
        let prov = by_file.get(file).map(Vec::as_slice).unwrap_or_default();
        if prov.len() != records.len() {
            return Err(DatasetError::InvalidArtifact(format!("{file}: provenance covers {} of {} records", prov.len(), records.len())));
        }
        records
            .into_iter()
            .zip(prov)
            .map(|(r, p)| {
                let (category, _) = prompt::parse_sft_question(&r.question)?;
                let polarity = if r.answer == EMPTY_MARKER { Polarity::Negative } else { Polarity::Positive };
                Ok(TrainingExample {
                    example_id: p.example_id.clone(),
                    category: category.to_owned(),
                    question: r.question,
                    answer: r.answer,
                    polarity,
                    source_verbatim_id: p.source_verbatim_id.clone(),
                })
            })
            .collect()
    };
    Ok(DatasetSplit {
        train: load(TRAIN_FILE)?,
        validation: load(VALIDATION_FILE)?,
        probe: load(PROBE_FILE)?,
        seed: manifest.seed,
        ratio: manifest.ratio,
    })
}

/// Checks the structural invariants every exported example must satisfy.
pub fn check_example(e: &TrainingExample) -> Result<(), String> {
    let (category, _) = prompt::parse_sft_question(&e.question).map_err(|err| format!("{}: {err}", e.example_id))?;
    if category != e.category {
        return Err(format!("{}: header category {category:?} differs from {:?}", e.example_id, e.category));
    }
    let negative = e.answer == EMPTY_MARKER;
    if negative != (e.polarity == Polarity::Negative) {
        return Err(format!("{}: polarity does not match answer", e.example_id));
    }
    if !negative && (e.answer.trim().is_empty() || e.answer.contains('\n') || e.answer != e.answer.trim_end()) {
        return Err(format!("{}: malformed positive answer", e.example_id));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::PromptStyle;
    use proptest::prelude::*;

    fn verbatim(id: usize, text: &str) -> Verbatim {
        Verbatim::new("d", id, text, "wood stain")
    }

    fn pool(n: usize) -> Vec<Verbatim> {
        (0..n).map(|i| verbatim(i, &format!("sentence {i}"))).collect()
    }

    fn positives(n: usize) -> Vec<TrainingExample> {
        (0..n)
            .map(|i| make_positive_example(&verbatim(i, &format!("review {i}")), &format!("need {i}"), "c").unwrap())
            .collect()
    }

    fn extraction(id: &str, statement: Option<&str>) -> Extraction {
        Extraction {
            verbatim_id: id.into(),
            prompt_style: PromptStyle::Sft,
            model_name: "m".into(),
            statement: statement.map(str::to_owned),
            raw_response: statement.unwrap_or("[]").into(),
            latency_ms: 0,
            attempts: 1,
            error: None,
        }
    }

    #[test]
    fn positive_example_matches_training_layout() {
        let v = verbatim(0, "Just really curious why Oxford Gray on this is a different color than the Oxford Gray on the powerblend sweats.");
        let e = make_positive_example(&v, "Confident that colors will be consistent across products", "activewear").unwrap();
        assert_eq!(
            e.question,
            "<GPT-VOC> <PRODUCT_CATEGORY=\"activewear\">\nJust really curious why Oxford Gray on this is a different color than the Oxford Gray on the powerblend sweats."
        );
        assert_eq!(e.answer, "Confident that colors will be consistent across products");
        assert_eq!(e.polarity, Polarity::Positive);
        assert_eq!(make_positive_example(&v, "X", "c").unwrap().answer, "X");
        assert!(matches!(make_positive_example(&v, "", "c"), Err(DatasetError::EmptyAnswer)));
        assert!(matches!(make_positive_example(&v, "a\nb", "c"), Err(DatasetError::MultilineAnswer(_))));
    }

    #[test]
    fn negative_example_answers_marker() {
        let e = make_negative_example(&verbatim(0, "I tested it and it worked really well."), "recreational vehicles").unwrap();
        assert_eq!(e.answer, "[]");
        assert_eq!(e.polarity, Polarity::Negative);
        assert!(check_example(&e).is_ok());
    }

    #[test]
    fn negatives_from_large_pool() {
        let p = pool(11_975);
        let picked = sample_negatives(&p, NegativeSamplingConfig { count: 47, seed: 3 }).unwrap();
        assert_eq!(picked.len(), 47);
        assert_eq!(picked.iter().map(|v| &v.verbatim_id).collect::<HashSet<_>>().len(), 47);
        let again = sample_negatives(&p, NegativeSamplingConfig { count: 47, seed: 3 }).unwrap();
        assert_eq!(picked, again);
        assert!(sample_negatives(&p, NegativeSamplingConfig { count: 0, seed: 3 }).unwrap().is_empty());
        assert!(matches!(
            sample_negatives(&pool(5), NegativeSamplingConfig { count: 6, seed: 0 }),
            Err(DatasetError::PoolTooSmall { requested: 6, available: 5 })
        ));
    }

    #[test]
    fn negative_inclusion_is_uniform() {
        let p = pool(100);
        let seeds = 20_000u64;
        let mut hits = [0u32; 100];
        for seed in 0..seeds {
            for v in sample_negatives(&p, NegativeSamplingConfig { count: 10, seed }).unwrap() {
                hits[v.ordinal] += 1;
            }
        }
        let expected = seeds as f64 * 0.1;
        let sigma = (seeds as f64 * 0.1 * 0.9).sqrt();
        for (i, h) in hits.iter().enumerate() {
            // 3 sigma per item, Bonferroni-widened to 4 sigma across the 100 items
            assert!((f64::from(*h) - expected).abs() < 4.0 * sigma, "item {i}: {h}");
        }
    }

    #[test]
    fn split_sizes_round_half_up() {
        assert_eq!(train_size(1549, 0.8), 1239);
        assert_eq!(train_size(10, 0.8), 8);
        assert_eq!(train_size(5, 0.5), 3);
        assert_eq!(train_size(10, 0.7), 7);
        let s = split_dataset(positives(10), Vec::new(), 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (8, 2));
        assert!(matches!(split_dataset(positives(3), Vec::new(), 1.0, 1), Err(DatasetError::RatioOutOfRange(_))));
        assert!(matches!(split_dataset(positives(3), Vec::new(), 0.0, 1), Err(DatasetError::RatioOutOfRange(_))));
    }

    #[test]
    fn negatives_land_in_train_only() {
        let negs: Vec<_> = pool(4).iter().map(|v| make_negative_example(v, "c").unwrap()).collect();
        let s = split_dataset(positives(10), negs, 0.8, 1).unwrap();
        assert_eq!(s.train.len(), 12);
        assert_eq!(s.train_negative_count(), 4);
        assert!(s.validation.iter().all(|e| e.polarity == Polarity::Positive));
    }

    #[test]
    fn scoring_counts_by_hand() {
        let pos = positives(10);
        let responses: Vec<_> = pos
            .iter()
            .enumerate()
            .map(|(i, e)| extraction(&e.example_id, (i >= 3).then_some("some need")))
            .collect();
        let r = score_validation(&responses, &pos).unwrap();
        assert_eq!(r.false_negative_rate, Some(0.3));
        assert_eq!(r.spurious_rate, None);

        let all_good: Vec<_> = pos.iter().map(|e| extraction(&e.example_id, Some("x"))).collect();
        let r = score_validation(&all_good, &pos).unwrap();
        assert_eq!(r.false_negative_rate, Some(0.0));

        assert!(matches!(score_validation(&all_good[..9], &pos), Err(DatasetError::Misaligned(_))));
    }

    #[test]
    fn scoring_mixed_fixture_matches_recount() {
        let mut gold = positives(12);
        gold.extend(pool(8).iter().map(|v| make_negative_example(v, "c").unwrap()));
        // deterministic pseudo-random answer pattern
        let answers: Vec<bool> = (0..20).map(|i| (i * 7 + 3) % 5 < 2).collect();
        let responses: Vec<_> = gold
            .iter()
            .zip(&answers)
            .map(|(e, &abstain)| extraction(&e.example_id, (!abstain).then_some("need")))
            .collect();
        let (mut fnr_n, mut sp_n) = (0, 0);
        for (e, &abstain) in gold.iter().zip(&answers) {
            match e.polarity {
                Polarity::Positive if abstain => fnr_n += 1,
                Polarity::Negative if !abstain => sp_n += 1,
                _ => {}
            }
        }
        let r = score_validation(&responses, &gold).unwrap();
        assert_eq!((r.positives, r.negatives), (12, 8));
        assert_eq!(r.false_negatives, fnr_n);
        assert_eq!(r.spurious, sp_n);
        assert_eq!(r.false_negative_rate, Some(fnr_n as f64 / 12.0));
        assert_eq!(r.spurious_rate, Some(sp_n as f64 / 8.0));
    }

    fn pairs(n: usize) -> Vec<PositivePair> {
        (0..n)
            .map(|i| PositivePair { verbatim_id: format!("v{i}"), text: format!("Review {i}."), cn: format!("Need {i}"), category: None })
            .collect()
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config = BuildConfig { category: "wood stain".into(), ratio: 0.8, seed: 7, negative_count: 5, probe_count: None };
        let built = build_dataset(&pairs(20), &pool(50), &config).unwrap();
        let manifest = export_dataset(&built.split, built.negative, Some(50), 0, dir.path()).unwrap();
        assert_eq!(manifest.seed, 7);
        assert_eq!(manifest.hyperparameters.epochs, 6);
        assert_eq!(manifest.hyperparameters.learning_rate, 2e-5);
        assert_eq!(manifest.hyperparameters.max_seq_length, 1024);
        assert_eq!(manifest.counts.probe, 5);
        let back = import_dataset(dir.path()).unwrap();
        assert_eq!(back, built.split);
        assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
    }

    #[test]
    fn probe_is_disjoint_from_training_negatives() {
        let config = BuildConfig { category: "c".into(), ratio: 0.8, seed: 1, negative_count: 10, probe_count: Some(10) };
        let built = build_dataset(&pairs(5), &pool(20), &config).unwrap();
        let train_src: HashSet<_> = built.split.train.iter().map(|e| &e.source_verbatim_id).collect();
        assert!(built.split.probe.iter().all(|e| !train_src.contains(&e.source_verbatim_id)));
        let too_big = BuildConfig { negative_count: 15, ..config };
        assert!(matches!(build_dataset(&pairs(5), &pool(20), &too_big), Err(DatasetError::PoolTooSmall { .. })));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 1usize..80, ratio in 0.05f64..0.95, seed in any::<u64>()) {
            let pos = positives(n);
            let s = split_dataset(pos.clone(), Vec::new(), ratio, seed).unwrap();
            prop_assert_eq!(s.train.len(), train_size(n, ratio));
            let mut ids: Vec<_> = s.train.iter().chain(&s.validation).map(|e| e.example_id.clone()).collect();
            ids.sort();
            let mut want: Vec<_> = pos.iter().map(|e| e.example_id.clone()).collect();
            want.sort();
            prop_assert_eq!(ids, want);
            let other = split_dataset(pos, Vec::new(), ratio, seed.wrapping_add(1)).unwrap();
            prop_assert_eq!(other.train.len(), s.train.len());
        }
    }
}
