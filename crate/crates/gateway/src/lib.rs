//! Client side of extraction: renders prompts, sends them to a chat-completion style backend
//! with bounded concurrency and retries, and turns responses into [`Extraction`] records in
//! input order.
//!
//! [`Extraction`]: voc_core::Extraction

mod backend;
mod batch;
mod config;
pub mod stub;

pub use backend::{Backend, BackendError, HttpBackend};
pub use batch::{extract_batch, run_prompts, BatchItem, BatchOutput, BatchSettings, BatchStats, PromptedItem, RetryPolicy};
pub use config::{BackendConfig, ConfigError, DEFAULT_API_KEY_ENV};
