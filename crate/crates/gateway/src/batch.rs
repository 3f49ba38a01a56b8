use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use rand::Rng;
use serde::{Deserialize, Serialize};
use voc_core::prompt::{parse_output, render_prompt, PromptError};
use voc_core::{Extraction, PromptStyle};

use crate::backend::{Backend, BackendError};
use crate::config::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl RetryPolicy {
    /// Full-jitter exponential backoff before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let cap = self
            .base_delay
            .saturating_mul(1u32.checked_shl(retry.saturating_sub(1)).unwrap_or(u32::MAX))
            .min(self.max_delay);
        if cap.is_zero() {
            return cap;
        }
        Duration::from_nanos(rng.random_range(0..=cap.as_nanos().min(u128::from(u64::MAX)) as u64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSettings {
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

/// Source text to be rendered into a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItem {
    pub id: String,
    pub text: String,
}

/// An already-rendered prompt, e.g. a fine-tuning question replayed for validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptedItem {
    pub id: String,
    /// `Err` when rendering failed; the item is reported as failed without a request.
    pub prompt: Result<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStats {
    pub items: usize,
    /// Requests actually sent, including retries.
    pub requests: usize,
    pub retries: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    /// One per input item, in input order.
    pub extractions: Vec<Extraction>,
    pub stats: BatchStats,
}

/// Renders each item with `style` and runs the batch.
///
/// The category is checked once up front, since a bad category would fail every item. An
/// item whose own text cannot be rendered fails individually.
pub async fn extract_batch<B: Backend>(
    backend: &B,
    items: &[BatchItem],
    style: PromptStyle,
    category: &str,
    settings: BatchSettings,
) -> Result<BatchOutput, ConfigError> {
    render_prompt(style, category, "probe")?;
    let prompted = items
        .iter()
        .map(|item| PromptedItem {
            id: item.id.clone(),
            prompt: render_prompt(style, category, &item.text).map_err(|e: PromptError| e.to_string()),
        })
        .collect::<Vec<_>>();
    run_prompts(backend, &prompted, style, settings).await
}

/// Sends every prompt with at most `max_in_flight` outstanding requests and reassembles the
/// results in input order.
pub async fn run_prompts<B: Backend>(
    backend: &B,
    items: &[PromptedItem],
    style: PromptStyle,
    settings: BatchSettings,
) -> Result<BatchOutput, ConfigError> {
    if settings.max_in_flight == 0 {
        return Err(ConfigError::ZeroInFlight);
    }
    let requests = AtomicUsize::new(0);
    let retries = AtomicUsize::new(0);
    let model = backend.model_name().to_owned();
    let (requests_ref, retries_ref, model_ref) = (&requests, &retries, &model);

    let mut results: Vec<(usize, Extraction)> = stream::iter(items.iter().enumerate())
        .map(|(index, item)| async move {
            let started = Instant::now();
            let mut record = Extraction {
                verbatim_id: item.id.clone(),
                prompt_style: style,
                model_name: model_ref.clone(),
                statement: None,
                raw_response: String::new(),
                latency_ms: 0,
                attempts: 0,
                error: None,
            };
            let prompt = match &item.prompt {
                Ok(p) => p,
                Err(e) => {
                    record.error = Some(format!("prompt: {e}"));
                    return (index, record);
                }
            };
            let outcome = loop {
                record.attempts += 1;
                requests_ref.fetch_add(1, Ordering::Relaxed);
                match backend.complete(prompt).await {
                    Ok(raw) => break Ok(raw),
                    Err(e) if e.is_retryable() && record.attempts <= settings.retry.max_retries => {
                        retries_ref.fetch_add(1, Ordering::Relaxed);
                        let delay = settings.retry.delay(record.attempts, &mut rand::rng());
                        tracing::debug!(id = %item.id, attempt = record.attempts, error = %e, ?delay, "retrying");
                        tokio::time::sleep(delay).await;
                    }
                    Err(e) => break Err(e),
                }
            };
            record.latency_ms = started.elapsed().as_millis() as u64;
            match outcome {
                Ok(raw) => {
                    record.statement = parse_output(&raw);
                    record.raw_response = raw;
                }
                Err(e) => {
                    tracing::warn!(id = %item.id, attempts = record.attempts, error = %e, "item failed");
                    record.error = Some(describe(&e));
                }
            }
            (index, record)
        })
        .buffer_unordered(settings.max_in_flight)
        .collect()
        .await;
    results.sort_by_key(|(i, _)| *i);
    let extractions: Vec<Extraction> = results.into_iter().map(|(_, e)| e).collect();
    let stats = BatchStats {
        items: items.len(),
        requests: requests.into_inner(),
        retries: retries.into_inner(),
        failures: extractions.iter().filter(|e| e.is_failure()).count(),
    };
    Ok(BatchOutput { extractions, stats })
}

fn describe(e: &BackendError) -> String {
    match e {
        BackendError::Transport(_) | BackendError::Timeout => format!("transport: {e}"),
        BackendError::Status { .. } => format!("http: {e}"),
        BackendError::Decode(_) => format!("decode: {e}"),
    }
}
