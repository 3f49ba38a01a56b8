//! Prompt rendering for the two prompting regimes and parsing of model answers.
//!
//! Both renderers are byte-exact: a fine-tuned model has only ever seen the tag layout it was
//! trained on, so nothing here escapes, trims or re-wraps caller text.

use crate::extraction::PromptStyle;

/// Answer emitted when the text contains no customer need.
pub const EMPTY_MARKER: &str = "[]";
/// Conditioning tag that opens every fine-tuning question.
pub const SFT_TAG: &str = "<GPT-VOC>";

const CATEGORY_OPEN: &str = "<PRODUCT_CATEGORY=\"";
const CATEGORY_CLOSE: &str = "\">";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("category {0:?} contains a double quote, which the tag grammar cannot express")]
    QuoteInCategory(String),
    #[error("question does not start with the conditioning header")]
    MissingHeader,
}

fn non_empty(value: &str, what: &'static str) -> Result<(), PromptError> {
    if value.trim().is_empty() {
        Err(PromptError::Empty(what))
    } else {
        Ok(())
    }
}

pub fn render_prompt_base(category: &str, review_text: &str) -> Result<String, PromptError> {
    non_empty(category, "category")?;
    non_empty(review_text, "review text")?;
    Ok(format!(
        "For a {category}, identify a customer need from the user review. If no need is found, return []. Review: {review_text}"
    ))
}

pub fn render_prompt_sft(category: &str, verbatim_text: &str) -> Result<String, PromptError> {
    non_empty(category, "category")?;
    non_empty(verbatim_text, "verbatim text")?;
    if category.contains('"') {
        return Err(PromptError::QuoteInCategory(category.to_owned()));
    }
    Ok(format!("{SFT_TAG} {CATEGORY_OPEN}{category}{CATEGORY_CLOSE}\n{verbatim_text}"))
}

pub fn render_prompt(style: PromptStyle, category: &str, text: &str) -> Result<String, PromptError> {
    match style {
        PromptStyle::Base => render_prompt_base(category, text),
        PromptStyle::Sft => render_prompt_sft(category, text),
    }
}

/// Inverse of [`render_prompt_sft`]: returns `(category, verbatim_text)`.
pub fn parse_sft_question(question: &str) -> Result<(&str, &str), PromptError> {
    let rest = question
        .strip_prefix(SFT_TAG)
        .and_then(|r| r.strip_prefix(' '))
        .and_then(|r| r.strip_prefix(CATEGORY_OPEN))
        .ok_or(PromptError::MissingHeader)?;
    let close = rest.find(CATEGORY_CLOSE).ok_or(PromptError::MissingHeader)?;
    let category = &rest[..close];
    let text = rest[close + CATEGORY_CLOSE.len()..]
        .strip_prefix('\n')
        .ok_or(PromptError::MissingHeader)?;
    if category.trim().is_empty() || text.trim().is_empty() {
        return Err(PromptError::MissingHeader);
    }
    Ok((category, text))
}

/// Interprets a raw model answer. `None` means the model reported no need.
pub fn parse_output(raw: &str) -> Option<String> {
    let mut text = raw.trim();
    if text.is_empty() {
        tracing::warn!("empty model response treated as no need");
        return None;
    }
    for (open, close) in [('"', '"'), ('\u{201c}', '\u{201d}')] {
        let min_len = open.len_utf8() + close.len_utf8();
        if text.len() >= min_len && text.starts_with(open) && text.ends_with(close) {
            text = text[open.len_utf8()..text.len() - close.len_utf8()].trim();
            break;
        }
    }
    if text.is_empty() || text == EMPTY_MARKER {
        None
    } else {
        Some(text.to_owned())
    }
}

/// True when a raw answer carries no usable text at all, not even the marker.
pub fn is_anomalous(raw: &str) -> bool {
    raw.trim().is_empty()
}
