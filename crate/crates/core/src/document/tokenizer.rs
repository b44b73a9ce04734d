//! Token counting.
//!
//! Counts are approximations of model tokenizers. The default, `bytes4`, is
//! `ceil(bytes / 4)` and is what [`DocumentHandle::estimated_tokens`] reports.
//! `words` is a regex pre-tokenizer (one token per word or punctuation mark,
//! leading whitespace attached) that splits text into contiguous spans, which
//! makes it suitable for exact middle truncation.
//!
//! [`DocumentHandle::estimated_tokens`]: super::DocumentHandle::estimated_tokens

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenizer {
    /// `ceil(bytes / 4)`.
    #[default]
    Bytes4,
    /// `ceil(chars / 4)`.
    Chars4,
    /// Words and punctuation marks.
    Words,
    /// Whitespace-separated fields.
    Whitespace,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown tokenizer `{0}` (expected one of bytes4, chars4, words, whitespace)")]
pub struct UnknownTokenizer(pub String);

impl FromStr for Tokenizer {
    type Err = UnknownTokenizer;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bytes4" | "default" | "estimate" => Ok(Self::Bytes4),
            "chars4" => Ok(Self::Chars4),
            "words" => Ok(Self::Words),
            "whitespace" => Ok(Self::Whitespace),
            _ => Err(UnknownTokenizer(s.to_string())),
        }
    }
}

impl fmt::Display for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bytes4 => "bytes4",
            Self::Chars4 => "chars4",
            Self::Words => "words",
            Self::Whitespace => "whitespace",
        })
    }
}

fn word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s*(?:\w+|[^\w\s])|\s+").expect("static regex"))
}

impl Tokenizer {
    pub fn count(&self, text: &str) -> usize {
        match self {
            Self::Bytes4 => text.len().div_ceil(4),
            Self::Chars4 => text.chars().count().div_ceil(4),
            Self::Words => word_regex().find_iter(text).count(),
            Self::Whitespace => text.split_whitespace().count(),
        }
    }

    /// Splits `text` into contiguous spans whose concatenation is `text`.
    ///
    /// For `bytes4` a span is the shortest run of whole characters covering at
    /// least four bytes, so multibyte text yields fewer spans than `count`.
    /// `whitespace` attaches separators to the following field.
    pub fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        match self {
            Self::Bytes4 => chunk_by(text, |chunk| chunk.len() >= 4),
            Self::Chars4 => {
                let mut spans = Vec::with_capacity(text.len() / 4 + 1);
                let mut start = 0;
                for (n, (idx, _)) in text.char_indices().enumerate() {
                    if n > 0 && n % 4 == 0 {
                        spans.push(&text[start..idx]);
                        start = idx;
                    }
                }
                if start < text.len() {
                    spans.push(&text[start..]);
                }
                spans
            }
            Self::Words => word_regex().find_iter(text).map(|m| m.as_str()).collect(),
            Self::Whitespace => {
                let mut spans = Vec::new();
                let mut start = 0;
                let mut in_field = false;
                for (idx, ch) in text.char_indices() {
                    let ws = ch.is_whitespace();
                    if ws && in_field {
                        spans.push(&text[start..idx]);
                        start = idx;
                    }
                    in_field = !ws;
                }
                if start < text.len() {
                    spans.push(&text[start..]);
                }
                spans
            }
        }
    }
}

fn chunk_by(text: &str, full: impl Fn(&str) -> bool) -> Vec<&str> {
    let mut spans = Vec::with_capacity(text.len() / 4 + 1);
    let mut start = 0;
    for (idx, ch) in text.char_indices() {
        let end = idx + ch.len_utf8();
        if full(&text[start..end]) {
            spans.push(&text[start..end]);
            start = end;
        }
    }
    if start < text.len() {
        spans.push(&text[start..]);
    }
    spans
}

/// Counts tokens with a tokenizer given by name; `None` selects the default.
pub fn count_tokens(text: &str, tokenizer: Option<&str>) -> Result<usize, UnknownTokenizer> {
    let tok = match tokenizer {
        Some(name) => name.parse()?,
        None => Tokenizer::default(),
    };
    Ok(tok.count(text))
}

/// Default estimate used for budgeting.
pub fn estimate_tokens(text: &str) -> usize {
    Tokenizer::Bytes4.count(text)
}
