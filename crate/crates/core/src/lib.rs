//! Customer-need extraction toolkit.
//!
//! The crate is organised by workflow stage:
//!
//! * [`corpus`] ingests reviews and interview transcripts and segments them into verbatims.
//! * [`prompt`] renders the base and tag-conditioned prompts and parses model answers.
//! * [`dataset`] builds question/answer fine-tuning sets with negative sampling and splits.
//! * [`coverage`] estimates how completely an extraction stream covers a final need set.
//! * [`study`] runs blind evaluation studies: ballots, ratings, majority votes and tests.
//! * [`winnow`] groups near-duplicate need statements for human review.
//!
//! Everything stochastic takes an explicit seed and is reproducible.

pub mod corpus;
pub mod coverage;
pub mod dataset;
pub mod extraction;
pub mod jsonl;
pub mod prompt;
pub mod seeding;
pub mod study;
pub mod winnow;

pub use corpus::{DocumentKind, Label, SourceDocument, Verbatim};
pub use extraction::{Extraction, PromptStyle};
