//! Sentence splitting, tokenization and lemma normalization.
//!
//! All spans are byte offsets into the document text, so `&text[span.range()]`
//! always yields the original substring. Sentence boundaries fall on `.`, `!`,
//! `?` and newlines. A period does not end a sentence when it sits between two
//! digits (`2.5`) or follows a word from the abbreviation list (`мм рт. ст.`).

mod lemmatizer;

pub use lemmatizer::{Lemmatizer, TableLemmatizer, SUFFIXES};

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};

/// Words after which a period never ends a sentence.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &["г", "гг", "мм", "рт", "ст", "т", "д", "др", "лет"];

/// Half-open byte range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    fn shift(self, by: usize) -> Self {
        Span::new(self.start + by, self.end + by)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// Original substring, case preserved.
    pub surface: String,
    pub lemma: String,
    /// Location in the document text.
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub span: Span,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn lemmas(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.lemma.as_str())
    }
}

/// A raw token before lemmatization: lowercased text plus its span within the
/// string that was tokenized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawToken {
    pub text: String,
    pub span: Span,
}

/// Splits `text` into tokens: maximal runs of letters and digits, where a
/// hyphen is kept when it sits between two such characters.
pub fn tokenize(text: &str) -> Vec<RawToken> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if c.is_alphanumeric() {
                j += 1;
            } else if c == '-' && j + 1 < chars.len() && chars[j + 1].1.is_alphanumeric() {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
        tokens.push(RawToken {
            text: text[start..end].to_lowercase(),
            span: Span::new(start, end),
        });
        i = j;
    }
    tokens
}

/// Lemmatizer plus segmentation settings; shareable across threads.
#[derive(Clone)]
pub struct Normalizer {
    lemmatizer: Arc<dyn Lemmatizer>,
    abbreviations: BTreeSet<String>,
}

impl std::fmt::Debug for Normalizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Normalizer")
            .field("lemmatizer", &self.lemmatizer.checksum())
            .field("abbreviations", &self.abbreviations)
            .finish()
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer::new(Arc::new(TableLemmatizer::packaged()))
    }
}

impl Normalizer {
    pub fn new(lemmatizer: Arc<dyn Lemmatizer>) -> Self {
        Normalizer {
            lemmatizer,
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Uses the lemma table named by `NEGATA_LEMMA_TABLE` when set, the
    /// packaged table otherwise.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os("NEGATA_LEMMA_TABLE") {
            Some(path) => Ok(Normalizer::new(Arc::new(TableLemmatizer::from_path(path)?))),
            None => Ok(Normalizer::default()),
        }
    }

    pub fn with_abbreviations<I, S>(mut self, extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.abbreviations
            .extend(extra.into_iter().map(|s| s.as_ref().trim().to_lowercase()));
        self.abbreviations.remove("");
        self
    }

    /// Adds abbreviations from a file with one entry per line.
    pub fn with_abbreviation_file(self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(self.with_abbreviations(content.lines()))
    }

    pub fn lemmatizer(&self) -> &dyn Lemmatizer {
        self.lemmatizer.as_ref()
    }

    pub fn abbreviations(&self) -> impl Iterator<Item = &str> {
        self.abbreviations.iter().map(String::as_str)
    }

    pub fn lemmatize(&self, token: &str) -> String {
        self.lemmatizer.lemmatize(token)
    }

    /// Returns sentence spans covering every non-whitespace character of
    /// `text`. Spans exclude surrounding whitespace.
    pub fn split_sentences(&self, text: &str) -> Vec<Span> {
        let mut spans = Vec::new();
        let mut start: Option<usize> = None;
        let mut chars = text.char_indices().peekable();

        let close = |spans: &mut Vec<Span>, s: usize, end: usize| {
            let trimmed = text[s..end].trim_end();
            if !trimmed.is_empty() {
                spans.push(Span::new(s, s + trimmed.len()));
            }
        };

        while let Some((i, c)) = chars.next() {
            if c == '\n' {
                if let Some(s) = start.take() {
                    close(&mut spans, s, i);
                }
                continue;
            }
            if c.is_whitespace() {
                continue;
            }
            let s = *start.get_or_insert(i);
            if matches!(c, '.' | '!' | '?') {
                if c == '.' && self.is_protected_period(text, i) {
                    continue;
                }
                let mut end = i + c.len_utf8();
                while let Some(&(j, next)) = chars.peek() {
                    if matches!(next, '.' | '!' | '?') {
                        end = j + next.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                close(&mut spans, s, end);
                start = None;
            }
        }
        if let Some(s) = start {
            close(&mut spans, s, text.len());
        }
        spans
    }

    fn is_protected_period(&self, text: &str, at: usize) -> bool {
        let before = &text[..at];
        let after = &text[at + 1..];
        let prev = before.chars().next_back();
        let next = after.chars().next();
        if prev.is_some_and(|c| c.is_ascii_digit()) && next.is_some_and(|c| c.is_ascii_digit()) {
            return true;
        }
        let word_start = before
            .char_indices()
            .rev()
            .take_while(|(_, c)| c.is_alphabetic())
            .last()
            .map(|(b, _)| b);
        let abbreviation = word_start.is_some_and(|b| self.abbreviations.contains(&before[b..].to_lowercase()));
        // an abbreviation followed by a capitalized word still ends the sentence
        abbreviation && !after.trim_start().chars().next().is_some_and(char::is_uppercase)
    }

    /// Splits, tokenizes and lemmatizes. Sentences without any token are
    /// dropped.
    pub fn sentences(&self, text: &str) -> Vec<Sentence> {
        self.split_sentences(text)
            .into_iter()
            .filter_map(|span| {
                let tokens: Vec<Token> = tokenize(&text[span.range()])
                    .into_iter()
                    .map(|raw| {
                        let span = raw.span.shift(span.start);
                        Token {
                            surface: text[span.range()].to_string(),
                            lemma: self.lemmatize(&raw.text),
                            span,
                        }
                    })
                    .collect();
                (!tokens.is_empty()).then_some(Sentence { span, tokens })
            })
            .collect()
    }

    /// Returns `doc` with its sentences populated. The text is not modified.
    pub fn normalize_document(&self, doc: &Document) -> Document {
        let mut out = doc.clone();
        out.sentences = Some(self.sentences(&doc.text));
        out
    }

    pub fn normalize_all(&self, docs: &[Document]) -> Vec<Document> {
        use rayon::prelude::*;
        docs.par_iter().map(|d| self.normalize_document(d)).collect()
    }

    /// Lemma sequence of a phrase given in plain text.
    pub fn phrase_lemmas(&self, phrase: &str) -> Vec<String> {
        tokenize(phrase)
            .into_iter()
            .map(|t| self.lemmatize(&t.text))
            .collect()
    }
}

/// True when `needle` occurs as a contiguous run inside some sentence.
pub(crate) fn contains_phrase(sentences: &[Sentence], needle: &[String]) -> bool {
    if needle.is_empty() {
        return false;
    }
    sentences.iter().any(|s| {
        s.tokens
            .windows(needle.len())
            .any(|w| w.iter().zip(needle).all(|(t, n)| t.lemma == *n))
    })
}
