//! Rule-based sentence segmentation and speaker-turn parsing.
//!
//! A sentence ends at a run of `.`, `!` or `?` (plus any closing quotes or brackets) that is
//! followed by whitespace and then an uppercase letter or an opening quote, or by the end of
//! the text. A period closing a known abbreviation or a single-letter initial never ends a
//! sentence.

const TERMINATORS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 7] = ['"', '\'', ')', ']', '\u{201d}', '\u{2019}', '}'];
const OPENERS: [char; 6] = ['"', '\'', '(', '[', '\u{201c}', '\u{2018}'];

const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "vs.", "e.g.", "i.e.", "approx.",
    "qt.", "qts.", "oz.", "lb.", "lbs.", "gal.", "gals.", "ft.", "sq.", "hr.", "hrs.", "yr.",
    "yrs.", "mfg.", "inc.", "co.", "u.s.", "a.m.", "p.m.",
];

fn is_abbreviation(word: &str) -> bool {
    let word = word.trim_start_matches(|c: char| OPENERS.contains(&c));
    let lower = word.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // single-letter initials such as "J."
    let mut chars = word.chars();
    matches!((chars.next(), chars.next(), chars.next()), (Some(c), Some('.'), None) if c.is_alphabetic())
}

/// Splits `text` into trimmed, non-empty sentences.
pub fn segment_text(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !TERMINATORS.contains(&c) {
            i += 1;
            continue;
        }
        let first_term = i;
        let mut j = i;
        while j < chars.len() && TERMINATORS.contains(&chars[j].1) {
            j += 1;
        }
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let end_byte = chars.get(j).map_or(text.len(), |(b, _)| *b);
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let boundary = if k == chars.len() {
            true
        } else if k > j {
            let next = chars[k].1;
            let starts_sentence = next.is_uppercase() || OPENERS.contains(&next);
            starts_sentence && !(c == '.' && j == first_term + 1 && preceding_word_is_abbreviation(text, &chars, first_term))
        } else {
            false
        };
        if boundary {
            push_trimmed(&mut out, &text[start..end_byte]);
            start = end_byte;
        }
        i = j.max(i + 1);
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn preceding_word_is_abbreviation(text: &str, chars: &[(usize, char)], period: usize) -> bool {
    let period_end = chars[period].0 + 1;
    let mut w = period;
    while w > 0 && !chars[w - 1].1.is_whitespace() {
        w -= 1;
    }
    is_abbreviation(&text[chars[w].0..period_end])
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_owned());
    }
}

/// Casefolded, whitespace-collapsed form used for exact-duplicate detection.
pub fn normalize_for_dedup(text: &str) -> String {
    text.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// One speaker turn of an interview transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub speaker: Option<String>,
    pub text: String,
}

fn speaker_prefix(line: &str) -> Option<(&str, &str)> {
    let trimmed = line.trim_start();
    let colon = trimmed.find(':')?;
    let (name, rest) = (&trimmed[..colon], &trimmed[colon + 1..]);
    let first = name.chars().next()?;
    let valid = first.is_uppercase()
        && name.len() <= 32
        && name.split_whitespace().count() <= 3
        && name.chars().all(|c| c.is_alphanumeric() || matches!(c, ' ' | '.' | '_' | '-' | '\''))
        && (rest.is_empty() || rest.starts_with(char::is_whitespace));
    valid.then(|| (name.trim(), rest.trim_start()))
}

/// Splits a transcript into turns. A line starting with `SPEAKER:` opens a new turn; other
/// lines continue the current one. Text before the first marker forms an anonymous turn.
pub fn split_turns(text: &str) -> Vec<Turn> {
    let mut turns: Vec<Turn> = Vec::new();
    for line in text.lines() {
        match speaker_prefix(line) {
            Some((speaker, rest)) => turns.push(Turn { speaker: Some(speaker.to_owned()), text: rest.to_owned() }),
            None => {
                if line.trim().is_empty() {
                    continue;
                }
                match turns.last_mut() {
                    Some(turn) => {
                        if !turn.text.is_empty() {
                            turn.text.push(' ');
                        }
                        turn.text.push_str(line.trim());
                    }
                    None => turns.push(Turn { speaker: None, text: line.trim().to_owned() }),
                }
            }
        }
    }
    turns.retain(|t| !t.text.trim().is_empty());
    turns
}
