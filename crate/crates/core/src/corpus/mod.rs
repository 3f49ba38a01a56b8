//! Review and transcript ingestion.
//!
//! Source files become [`SourceDocument`]s, which are then cut into [`Verbatim`]s: single
//! sentences for reviews, turn-bounded sentence windows for interview transcripts.

mod segment;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};

pub use segment::{normalize_for_dedup, segment_text, split_turns, Turn};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] JsonlError),
    #[error("cannot list {path}: {source}")]
    List { path: PathBuf, source: std::io::Error },
    #[error("no records found under {0}")]
    NoRecords(PathBuf),
    #[error("{path}:{line}: {message}")]
    InvalidRecord { path: PathBuf, line: usize, message: String },
    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),
    #[error("document {doc_id:?} is a {actual}, expected a {expected}")]
    WrongKind { doc_id: String, expected: DocumentKind, actual: DocumentKind },
    #[error("chunk window must be at least 1")]
    ZeroWindow,
    #[error("label file references unknown verbatim {0:?}")]
    UnknownVerbatim(String),
    #[error("conflicting labels for verbatim {0:?}")]
    ConflictingLabel(String),
    #[error("{0} is not an ingestible label")]
    InvalidLabel(Label),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocumentKind {
    Review,
    Transcript,
}

impl fmt::Display for DocumentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DocumentKind::Review => "review",
            DocumentKind::Transcript => "transcript",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub kind: DocumentKind,
    pub category: String,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// Annotation attached to a verbatim by the analysts who screened the corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    /// The sentence led to a need in the original study.
    Verbatim,
    Informative,
    Uninformative,
    #[default]
    Unlabeled,
}

impl Label {
    pub const ANNOTATED: [Label; 3] = [Label::Verbatim, Label::Informative, Label::Uninformative];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Verbatim => "verbatim",
            Label::Informative => "informative",
            Label::Uninformative => "uninformative",
            Label::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verbatim {
    pub verbatim_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub category: String,
    #[serde(default)]
    pub label: Label,
}

impl Verbatim {
    pub fn new(doc_id: &str, ordinal: usize, text: impl Into<String>, category: &str) -> Self {
        Verbatim {
            verbatim_id: format!("{doc_id}:{ordinal}"),
            doc_id: doc_id.to_owned(),
            ordinal,
            text: text.into(),
            category: category.to_owned(),
            label: Label::Unlabeled,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ReviewRecord {
    id: String,
    text: String,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

fn input_files(path: &Path, kind: DocumentKind) -> Result<Vec<PathBuf>, CorpusError> {
    if path.is_file() {
        return Ok(vec![path.to_owned()]);
    }
    let list_err = |source| CorpusError::List { path: path.to_owned(), source };
    let wanted: &[&str] = match kind {
        DocumentKind::Review => &["jsonl", "ndjson", "json"],
        DocumentKind::Transcript => &["txt"],
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path).map_err(list_err)? {
        let p = entry.map_err(list_err)?.path();
        let ext = p.extension().and_then(|e| e.to_str()).unwrap_or_default();
        if p.is_file() && wanted.contains(&ext) {
            files.push(p);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

fn file_label(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Reads review JSON Lines or transcript text files from a file or directory.
///
/// `category` is the fallback for records that do not carry their own. Either every record
/// parses or nothing is returned.
pub fn ingest_documents(
    path: &Path,
    kind: DocumentKind,
    category: &str,
) -> Result<Vec<SourceDocument>, CorpusError> {
    let mut docs = Vec::new();
    for file in input_files(path, kind)? {
        let source = file_label(&file);
        match kind {
            DocumentKind::Review => {
                for (index, (line, rec)) in jsonl::read_records::<ReviewRecord>(&file)?.into_iter().enumerate() {
                    let invalid = |message: &str| CorpusError::InvalidRecord {
                        path: file.clone(),
                        line,
                        message: message.to_owned(),
                    };
                    let category = rec
                        .category
                        .filter(|c| !c.trim().is_empty())
                        .unwrap_or_else(|| category.to_owned());
                    if category.trim().is_empty() {
                        return Err(invalid("record has no category"));
                    }
                    if rec.id.trim().is_empty() {
                        return Err(invalid("record has an empty id"));
                    }
                    let mut metadata = rec.metadata;
                    metadata.insert("source_file".into(), source.clone());
                    metadata.insert("record_index".into(), index.to_string());
                    docs.push(SourceDocument { doc_id: rec.id, kind, category, text: rec.text, metadata });
                }
            }
            DocumentKind::Transcript => {
                let text = std::fs::read_to_string(&file)
                    .map_err(|source| JsonlError::Read { path: file.clone(), source })?;
                if category.trim().is_empty() {
                    return Err(CorpusError::InvalidRecord {
                        path: file.clone(),
                        line: 0,
                        message: "transcripts need a category".into(),
                    });
                }
                let doc_id = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let metadata = BTreeMap::from([
                    ("source_file".to_owned(), source),
                    ("record_index".to_owned(), "0".to_owned()),
                ]);
                docs.push(SourceDocument { doc_id, kind, category: category.to_owned(), text, metadata });
            }
        }
    }
    if docs.is_empty() {
        return Err(CorpusError::NoRecords(path.to_owned()));
    }
    let mut seen = HashSet::new();
    for doc in &docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(CorpusError::DuplicateDocument(doc.doc_id.clone()));
        }
    }
    Ok(docs)
}

/// Splits a review into one verbatim per sentence, in document order.
pub fn segment_sentences(doc: &SourceDocument) -> Result<Vec<Verbatim>, CorpusError> {
    if doc.kind != DocumentKind::Review {
        return Err(CorpusError::WrongKind {
            doc_id: doc.doc_id.clone(),
            expected: DocumentKind::Review,
            actual: doc.kind,
        });
    }
    Ok(segment_text(&doc.text)
        .into_iter()
        .enumerate()
        .map(|(i, s)| Verbatim::new(&doc.doc_id, i, s, &doc.category))
        .collect())
}

/// Groups transcript sentences into windows of at most `window` sentences.
///
/// Windows never span a change of speaker: each turn is chunked on its own, so the last
/// chunk of a turn may be short.
pub fn chunk_transcript(doc: &SourceDocument, window: usize) -> Result<Vec<Verbatim>, CorpusError> {
    if window == 0 {
        return Err(CorpusError::ZeroWindow);
    }
    if doc.kind != DocumentKind::Transcript {
        return Err(CorpusError::WrongKind {
            doc_id: doc.doc_id.clone(),
            expected: DocumentKind::Transcript,
            actual: doc.kind,
        });
    }
    let mut out = Vec::new();
    for turn in split_turns(&doc.text) {
        let sentences = segment_text(&turn.text);
        for chunk in sentences.chunks(window) {
            let ordinal = out.len();
            out.push(Verbatim::new(&doc.doc_id, ordinal, chunk.join(" "), &doc.category));
        }
    }
    Ok(out)
}

/// Keeps the first verbatim of every group whose casefolded, whitespace-collapsed text matches.
pub fn dedup_exact(verbatims: Vec<Verbatim>) -> Vec<Verbatim> {
    let mut seen = HashSet::new();
    verbatims
        .into_iter()
        .filter(|v| seen.insert(normalize_for_dedup(&v.text)))
        .collect()
}

#[derive(Debug, Deserialize)]
struct LabelRecord {
    verbatim_id: String,
    label: Label,
}

/// Applies an annotation file to `verbatims` in place and returns how many were labelled.
pub fn apply_labels(verbatims: &mut [Verbatim], label_file: &Path) -> Result<usize, CorpusError> {
    let mut labels: HashMap<String, Label> = HashMap::new();
    for rec in jsonl::read::<LabelRecord>(label_file)? {
        if rec.label == Label::Unlabeled {
            return Err(CorpusError::InvalidLabel(rec.label));
        }
        if let Some(prev) = labels.insert(rec.verbatim_id.clone(), rec.label) {
            if prev != rec.label {
                return Err(CorpusError::ConflictingLabel(rec.verbatim_id));
            }
        }
    }
    let index: HashMap<&str, usize> =
        verbatims.iter().enumerate().map(|(i, v)| (v.verbatim_id.as_str(), i)).collect();
    let mut hits = Vec::with_capacity(labels.len());
    for (id, label) in &labels {
        let i = *index.get(id.as_str()).ok_or_else(|| CorpusError::UnknownVerbatim(id.clone()))?;
        hits.push((i, *label));
    }
    for (i, label) in &hits {
        verbatims[*i].label = *label;
    }
    Ok(hits.len())
}

pub fn export_verbatims(path: &Path, verbatims: &[Verbatim]) -> Result<(), CorpusError> {
    Ok(jsonl::write(path, verbatims)?)
}

pub fn import_verbatims(path: &Path) -> Result<Vec<Verbatim>, CorpusError> {
    let records = jsonl::read_records::<Verbatim>(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (line, v) in records {
        if v.text.trim().is_empty() {
            return Err(CorpusError::InvalidRecord { path: path.to_owned(), line, message: "empty verbatim text".into() });
        }
        if !seen.insert((v.doc_id.clone(), v.ordinal)) {
            return Err(CorpusError::InvalidRecord {
                path: path.to_owned(),
                line,
                message: format!("duplicate (doc_id, ordinal) ({}, {})", v.doc_id, v.ordinal),
            });
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn review(text: &str) -> SourceDocument {
        SourceDocument {
            doc_id: "r1".into(),
            kind: DocumentKind::Review,
            category: "wood stain".into(),
            text: text.into(),
            metadata: BTreeMap::new(),
        }
    }

    fn transcript(text: &str) -> SourceDocument {
        SourceDocument { kind: DocumentKind::Transcript, ..review(text) }
    }

    fn texts(vs: &[Verbatim]) -> Vec<&str> {
        vs.iter().map(|v| v.text.as_str()).collect()
    }

    #[test]
    fn three_terminated_sentences() {
        let vs = segment_sentences(&review("Great stain. Dried fast! Would buy again?")).unwrap();
        assert_eq!(texts(&vs), ["Great stain.", "Dried fast!", "Would buy again?"]);
        assert_eq!(vs.iter().map(|v| v.ordinal).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(vs[2].verbatim_id, "r1:2");
    }

    #[test]
    fn abbreviation_does_not_split() {
        let vs = segment_sentences(&review("I used 2 qts. of stain on the deck.")).unwrap();
        assert_eq!(texts(&vs), ["I used 2 qts. of stain on the deck."]);
        let vs = segment_sentences(&review("I asked Mr. Jones. He agreed.")).unwrap();
        assert_eq!(texts(&vs), ["I asked Mr. Jones.", "He agreed."]);
    }

    #[test]
    fn empty_review_yields_nothing() {
        assert!(segment_sentences(&review("")).unwrap().is_empty());
        assert!(segment_sentences(&review("   \n ")).unwrap().is_empty());
    }

    #[test]
    fn segmenting_a_transcript_is_rejected() {
        assert!(matches!(segment_sentences(&transcript("Hi.")), Err(CorpusError::WrongKind { .. })));
        assert!(matches!(chunk_transcript(&review("Hi."), 2), Err(CorpusError::WrongKind { .. })));
    }

    #[test]
    fn ten_sentences_window_three() {
        let text: String = (0..10).map(|i| format!("Sentence number {i}. ")).collect();
        let chunks = chunk_transcript(&transcript(&text), 3).unwrap();
        let sizes: Vec<usize> = chunks.iter().map(|c| c.text.matches("Sentence").count()).collect();
        assert_eq!(sizes, [3, 3, 3, 1]);
    }

    #[test]
    fn chunks_respect_speaker_turns() {
        let text = "Q: How do you stain? Tell me more.\nA: I brush it on. Then I wait. Then I wipe. It dries.\nQ: Anything else?\n";
        let chunks = chunk_transcript(&transcript(text), 3).unwrap();
        assert_eq!(
            texts(&chunks),
            ["How do you stain? Tell me more.", "I brush it on. Then I wait. Then I wipe.", "It dries.", "Anything else?"]
        );
    }

    #[test]
    fn single_sentence_large_window() {
        let chunks = chunk_transcript(&transcript("Only one sentence here."), 5).unwrap();
        assert_eq!(chunks.len(), 1);
        assert!(matches!(chunk_transcript(&transcript("x."), 0), Err(CorpusError::ZeroWindow)));
    }

    #[test]
    fn dedup_casefolds_and_preserves_order() {
        let vs = ["Good.", "good.", "Bad."]
            .iter()
            .enumerate()
            .map(|(i, t)| Verbatim::new("d", i, *t, "c"))
            .collect();
        assert_eq!(texts(&dedup_exact(vs)), ["Good.", "Bad."]);
        assert!(dedup_exact(Vec::new()).is_empty());
    }

    #[test]
    fn dedup_planted_duplicates() {
        let mut vs = Vec::new();
        for i in 0..900 {
            vs.push(Verbatim::new("d", vs.len(), format!("unique statement {i}"), "c"));
        }
        // 100 variants differing only in case and spacing
        for i in (0..900).step_by(9) {
            vs.push(Verbatim::new("d", vs.len(), format!("UNIQUE   statement  {i}"), "c"));
        }
        assert_eq!(vs.len(), 1000);
        let out = dedup_exact(vs);
        assert_eq!(out.len(), 900);
        assert!(out.iter().all(|v| v.text.starts_with("unique")));
    }

    fn write_file(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn ingest_three_reviews() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"id":"a","text":"One."}
{"id":"b","text":"Two.","category":"paint"}
{"id":"c","text":"Three.","metadata":{"date":"2020-01-01"}}
"#;
        let p = write_file(dir.path(), "reviews.jsonl", body);
        let docs = ingest_documents(&p, DocumentKind::Review, "wood stain").unwrap();
        assert_eq!(docs.iter().map(|d| d.doc_id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(docs[0].category, "wood stain");
        assert_eq!(docs[1].category, "paint");
        assert_eq!(docs[2].metadata["record_index"], "2");
        assert_eq!(docs[2].metadata["source_file"], "reviews.jsonl");
        assert_eq!(docs[2].metadata["date"], "2020-01-01");
    }

    #[test]
    fn ingest_empty_file_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(dir.path(), "empty.jsonl", "");
        let err = ingest_documents(&p, DocumentKind::Review, "c").unwrap_err();
        assert!(err.to_string().contains("no records"), "{err}");
    }

    #[test]
    fn ingest_malformed_record_is_all_or_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let body = "{\"id\":\"1\",\"text\":\"a\"}\n{\"id\":\"2\",\"text\":\"b\"}\n{\"id\":\"3\",\"text\":\n{\"id\":\"4\",\"text\":\"d\"}\n{\"id\":\"5\",\"text\":\"e\"}\n";
        let p = write_file(dir.path(), "r.jsonl", body);
        match ingest_documents(&p, DocumentKind::Review, "c") {
            Err(CorpusError::Io(JsonlError::Malformed { line, .. })) => assert_eq!(line, 3),
            other => panic!("expected malformed-record error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_directory_orders_by_filename() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "b.txt", "A: Hello there.");
        write_file(dir.path(), "a.txt", "Q: Hi.");
        write_file(dir.path(), "notes.md", "ignored");
        let docs = ingest_documents(dir.path(), DocumentKind::Transcript, "oral care").unwrap();
        assert_eq!(docs.iter().map(|d| d.doc_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn duplicate_document_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(dir.path(), "r.jsonl", "{\"id\":\"x\",\"text\":\"a\"}\n{\"id\":\"x\",\"text\":\"b\"}\n");
        assert!(matches!(ingest_documents(&p, DocumentKind::Review, "c"), Err(CorpusError::DuplicateDocument(_))));
    }

    #[test]
    fn labels_apply_and_unknown_ids_fail() {
        let dir = tempfile::tempdir().unwrap();
        let mut vs: Vec<Verbatim> = (0..3).map(|i| Verbatim::new("d", i, "t", "c")).collect();
        let p = write_file(dir.path(), "l.jsonl", "{\"verbatim_id\":\"d:1\",\"label\":\"informative\"}\n");
        assert_eq!(apply_labels(&mut vs, &p).unwrap(), 1);
        assert_eq!(vs[1].label, Label::Informative);
        assert_eq!(vs[0].label, Label::Unlabeled);
        let bad = write_file(dir.path(), "bad.jsonl", "{\"verbatim_id\":\"zz\",\"label\":\"verbatim\"}\n");
        assert!(matches!(apply_labels(&mut vs, &bad), Err(CorpusError::UnknownVerbatim(_))));
    }

    #[test]
    fn export_import_round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let mut vs = segment_sentences(&review("Great stain. It \"pops\"! Dried in 2 hrs. overnight.")).unwrap();
        vs[1].label = Label::Verbatim;
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        export_verbatims(&a, &vs).unwrap();
        let back = import_verbatims(&a).unwrap();
        assert_eq!(back, vs);
        export_verbatims(&b, &back).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
