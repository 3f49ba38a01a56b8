//! Scripted in-process backend for tests and dry runs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use crate::backend::{Backend, BackendError};

/// What the stub does for one call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub delay: Duration,
    pub result: Result<String, BackendError>,
}

impl Reply {
    pub fn ok(text: impl Into<String>) -> Self {
        Reply { delay: Duration::ZERO, result: Ok(text.into()) }
    }

    pub fn err(error: BackendError) -> Self {
        Reply { delay: Duration::ZERO, result: Err(error) }
    }

    pub fn after(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

/// Backend driven by a closure of `(prompt, attempt)`, where `attempt` counts calls for that
/// prompt starting at 1. Records call counts and the peak number of concurrent calls.
pub struct ScriptedBackend<F> {
    model: String,
    script: F,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    attempts: Mutex<HashMap<String, u32>>,
}

impl<F> ScriptedBackend<F>
where
    F: Fn(&str, u32) -> Reply + Send + Sync,
{
    pub fn new(model: &str, script: F) -> Self {
        ScriptedBackend {
            model: model.into(),
            script,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            attempts: Mutex::new(HashMap::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

/// Stub that answers the empty marker to everything.
pub fn empty_marker_backend(model: &str) -> ScriptedBackend<impl Fn(&str, u32) -> Reply + Send + Sync> {
    ScriptedBackend::new(model, |_, _| Reply::ok(voc_core::prompt::EMPTY_MARKER))
}

impl<F> Backend for ScriptedBackend<F>
where
    F: Fn(&str, u32) -> Reply + Send + Sync,
{
    fn model_name(&self) -> &str {
        &self.model
    }

    async fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let attempt = {
            let mut map = self.attempts.lock().unwrap_or_else(|p| p.into_inner());
            let n = map.entry(prompt.to_owned()).or_insert(0);
            *n += 1;
            *n
        };
        let reply = (self.script)(prompt, attempt);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !reply.delay.is_zero() {
            tokio::time::sleep(reply.delay).await;
        } else {
            tokio::task::yield_now().await;
        }
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        reply.result
    }
}
