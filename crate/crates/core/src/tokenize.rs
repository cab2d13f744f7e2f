//! Reference tokenizer shared by the built-in scorer, answer F1 and the
//! reader-input token budget.
//!
//! Text is NFKC-normalized and lowercased. Han, Hiragana, Katakana, Hangul and
//! Thai characters are single-character tokens; everything else is split on
//! whitespace, with punctuation stripped from both ends of each piece.

use std::ops::Range;

use unicode_normalization::UnicodeNormalization;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};
use unicode_script::{Script, UnicodeScript};

use crate::error::{Error, Result};

/// Ordered, non-empty tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.iter().any(String::is_empty) {
            return Err(Error::Validation("token sequences cannot contain empty tokens".into()));
        }
        Ok(TokenSequence(tokens))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl<S: AsRef<str>> FromIterator<S> for TokenSequence {
    /// Collects tokens, silently skipping empty strings.
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence(
            iter.into_iter()
                .map(|s| s.as_ref().to_owned())
                .filter(|s| !s.is_empty())
                .collect(),
        )
    }
}

fn is_single_char_script(c: char) -> bool {
    matches!(
        c.script(),
        Script::Han | Script::Hiragana | Script::Katakana | Script::Hangul | Script::Thai
    )
}

fn is_punctuation(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Punctuation
}

pub(crate) fn normalize(text: &str) -> String {
    text.nfkc().collect()
}

/// Byte ranges of the tokens of an already normalized string, before lowercasing.
pub(crate) fn token_spans(normalized: &str) -> Vec<Range<usize>> {
    fn flush(text: &str, run: Range<usize>, out: &mut Vec<Range<usize>>) {
        let piece = &text[run.clone()];
        let trimmed = piece.trim_start_matches(is_punctuation);
        let start = run.start + (piece.len() - trimmed.len());
        let trimmed = trimmed.trim_end_matches(is_punctuation);
        if !trimmed.is_empty() {
            out.push(start..start + trimmed.len());
        }
    }

    let mut spans = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, c) in normalized.char_indices() {
        if c.is_whitespace() || is_single_char_script(c) {
            if let Some(s) = run_start.take() {
                flush(normalized, s..i, &mut spans);
            }
            if !c.is_whitespace() {
                spans.push(i..i + c.len_utf8());
            }
        } else if run_start.is_none() {
            run_start = Some(i);
        }
    }
    if let Some(s) = run_start {
        flush(normalized, s..normalized.len(), &mut spans);
    }
    spans
}

pub fn tokenize(text: &str) -> TokenSequence {
    let normalized = normalize(text);
    TokenSequence(
        token_spans(&normalized)
            .into_iter()
            .map(|r| normalized[r].to_lowercase())
            .collect(),
    )
}

/// Number of tokens `tokenize` would produce.
pub fn count_tokens(text: &str) -> usize {
    token_spans(&normalize(text)).len()
}
