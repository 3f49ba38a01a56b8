//! Blind evaluation studies.
//!
//! A study samples labelled verbatims, shows every rater each sampled review together with one
//! candidate statement per extraction method in a shuffled, unlabelled order, collects yes/no
//! answers per (statement, question), and aggregates them by majority vote. Which method wrote
//! which statement, and which review label an item carries, never leave the server.

mod aggregate;
mod ballot;
mod design;
mod disaggregate;
mod rating;
mod sample;
mod service;
mod stats;
mod store;

use std::path::PathBuf;

pub use aggregate::{aggregate_majority, resolve_votes, Judgment, Vote};
pub use ballot::{assemble_ballots, Ballot, BallotView, Candidate, DimensionView, SlotAssignment, StatementsByMethod};
pub use design::{characteristic_dimensions, quality_dimensions, Dimension, SampleSpec, StudyDesign};
pub use disaggregate::{disaggregate, render_disaggregation_csv, DisaggregateRow, DISAGGREGATION_HEADER};
pub use rating::{Answer, AnswerGrid, Rating, YesNo};
pub use sample::build_sample;
pub use service::{
    ComparisonQuery, InstructionDimension, Instructions, Progress, StudyPackage, StudyRegistry, StatementRecord, LEASE_TTL,
};
pub use stats::{
    compare_methods, mcnemar_exact, render_comparisons_csv, two_proportion_z, ComparisonResult, DecoyPolicy,
    TestKind, COMPARISON_HEADER,
};
pub use store::{StudyStore, SubmitOutcome, BALLOTS_FILE, DESIGN_FILE, RATINGS_FILE};

use crate::jsonl::JsonlError;

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("invalid study design: {0}")]
    InvalidDesign(String),
    #[error("label {label}: requested {requested} items but only {available} are available")]
    InsufficientPool { label: crate::Label, requested: usize, available: usize },
    #[error("verbatim {verbatim_id} needs a decoy for method {method} but the decoy pool is empty")]
    EmptyDecoyPool { verbatim_id: String, method: String },
    #[error("unknown method {0}")]
    UnknownMethod(String),
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error("study {0} already exists")]
    StudyExists(String),
    #[error("unknown rater {0}")]
    UnknownRater(String),
    #[error("unknown ballot {0}")]
    UnknownBallot(String),
    #[error("ballot {ballot_id} belongs to another rater, not {rater_id}")]
    WrongRater { ballot_id: String, rater_id: String },
    #[error("incomplete answer grid; missing (slot, dimension) cells: {}", format_cells(.missing))]
    Incomplete { missing: Vec<(usize, String)> },
    #[error("answer for unknown cell (slot {slot}, dimension {dimension})")]
    UnknownCell { slot: usize, dimension: String },
    #[error("cell (slot {slot}, dimension {dimension}) answered twice with different values")]
    ContradictoryCell { slot: usize, dimension: String },
    #[error("ballot {ballot_id} already has a different rating from {rater_id}")]
    ConflictingRating { ballot_id: String, rater_id: String },
    #[error("{missing} of {expected} ballots are unrated; pass the partial flag to aggregate anyway")]
    MissingRatings { missing: usize, expected: usize },
    #[error("methods {method_a} and {method_b} were judged on different verbatim sets for dimension {dimension}")]
    MismatchedItems { method_a: String, method_b: String, dimension: String },
    #[error("unknown dimension {0}")]
    UnknownDimension(String),
    #[error("corrupt ratings log {path} at line {line}: {message}")]
    CorruptLog { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

fn format_cells(cells: &[(usize, String)]) -> String {
    cells.iter().map(|(s, d)| format!("({s}, {d})")).collect::<Vec<_>>().join(", ")
}

impl StudyError {
    /// Stable machine-readable code for API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            StudyError::InvalidDesign(_) => "invalid_design",
            StudyError::InsufficientPool { .. } => "insufficient_pool",
            StudyError::EmptyDecoyPool { .. } => "empty_decoy_pool",
            StudyError::UnknownMethod(_) => "unknown_method",
            StudyError::UnknownStudy(_) => "unknown_study",
            StudyError::StudyExists(_) => "study_exists",
            StudyError::UnknownRater(_) => "unknown_rater",
            StudyError::UnknownBallot(_) => "unknown_ballot",
            StudyError::WrongRater { .. } => "wrong_rater",
            StudyError::Incomplete { .. } => "incomplete_grid",
            StudyError::UnknownCell { .. } => "unknown_cell",
            StudyError::ContradictoryCell { .. } => "contradictory_cell",
            StudyError::ConflictingRating { .. } => "conflicting_duplicate",
            StudyError::MissingRatings { .. } => "missing_ratings",
            StudyError::MismatchedItems { .. } => "mismatched_items",
            StudyError::UnknownDimension(_) => "unknown_dimension",
            StudyError::CorruptLog { .. } => "corrupt_log",
            StudyError::Io { .. } | StudyError::Jsonl(_) | StudyError::Json { .. } => "storage",
        }
    }

    /// True for errors caused by the caller's input rather than the server state.
    pub fn is_client_error(&self) -> bool {
        !matches!(self, StudyError::CorruptLog { .. } | StudyError::Io { .. } | StudyError::Jsonl(_) | StudyError::Json { .. })
    }
}
