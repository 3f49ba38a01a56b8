//! The result record produced for every prompt sent to a model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    Base,
    Sft,
}

impl fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptStyle::Base => "base",
            PromptStyle::Sft => "sft",
        })
    }
}

impl FromStr for PromptStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(PromptStyle::Base),
            "sft" => Ok(PromptStyle::Sft),
            other => Err(format!("unknown prompt style {other:?} (expected base or sft)")),
        }
    }
}

/// One model response for one input item.
///
/// `verbatim_id` is the id of whatever was submitted; for validation runs it is the
/// training example id. Items that failed after all retries keep an `error` and an empty
/// response rather than disappearing from the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub verbatim_id: String,
    pub prompt_style: PromptStyle,
    pub model_name: String,
    pub statement: Option<String>,
    pub raw_response: String,
    pub latency_ms: u64,
    #[serde(default = "one")]
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn one() -> u32 {
    1
}

impl Extraction {
    pub fn is_failure(&self) -> bool {
        self.error.is_some()
    }
}
