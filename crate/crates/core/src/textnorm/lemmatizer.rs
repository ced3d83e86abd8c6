use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Maps a lowercased surface form to its lemma.
///
/// Implementations must be total (every input gets a non-empty lemma when the
/// input is non-empty) and deterministic.
pub trait Lemmatizer: Send + Sync {
    fn lemmatize(&self, token: &str) -> String;

    /// Identifies the lemma data, recorded in model files so a mismatch
    /// between training and inference can be reported.
    fn checksum(&self) -> String;
}

/// Inflectional endings removed by the fallback, longest first.
pub const SUFFIXES: &[&str] = &[
    "иями", "ями", "ами", "ого", "его", "ому", "ему", "ыми", "ими", "ает", "яет", "ует", "ала",
    "ила", "али", "или", "ают", "яют", "уют", "ов", "ев", "ей", "ой", "ом", "ем", "ам", "ям",
    "ах", "ях", "ая", "яя", "ое", "ее", "ый", "ий", "ым", "им", "ую", "юю", "ых", "их", "ал", "ил",
    "ет", "ит", "ут", "ют", "ят", "а", "я", "у", "ю", "ы", "и", "е", "о",
];

const MIN_STEM_CHARS: usize = 3;

const PACKAGED_TABLE: &str = include_str!("../../data/lemmas.tsv");

/// Dictionary lookup with a suffix-stripping fallback.
///
/// Lookups repeat until the form is stable, so the result is always a fixed
/// point: `lemmatize(lemmatize(t)) == lemmatize(t)`.
#[derive(Clone, Debug)]
pub struct TableLemmatizer {
    table: HashMap<String, String>,
    checksum: String,
}

impl TableLemmatizer {
    /// The lemma table shipped with the crate.
    pub fn packaged() -> Self {
        Self::parse(PACKAGED_TABLE).expect("packaged lemma table is well formed")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content)
    }

    /// Parses `surface<TAB>lemma` lines. Blank lines and lines starting with
    /// `#` are skipped.
    pub fn parse(content: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, lemma) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(Some(n + 1), "expected surface<TAB>lemma"))?;
            let (surface, lemma) = (surface.trim().to_lowercase(), lemma.trim().to_lowercase());
            if surface.is_empty() || lemma.is_empty() {
                return Err(Error::format(Some(n + 1), "empty surface or lemma"));
            }
            entries.push((surface, lemma));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_entries<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: HashMap<String, String> = entries.into_iter().collect();
        // every lemma is its own lemma
        let lemmas: Vec<String> = table.values().cloned().collect();
        for lemma in lemmas {
            table.insert(lemma.clone(), lemma);
        }
        let mut sorted: Vec<(&String, &String)> = table.iter().collect();
        sorted.sort();
        let mut hasher = Sha256::new();
        for (s, l) in sorted {
            hasher.update(s.as_bytes());
            hasher.update(b"\t");
            hasher.update(l.as_bytes());
            hasher.update(b"\n");
        }
        let checksum = hex::encode(hasher.finalize());
        TableLemmatizer { table, checksum }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.table.contains_key(surface)
    }

    fn step(&self, token: &str) -> String {
        if let Some(lemma) = self.table.get(token) {
            return lemma.clone();
        }
        strip_suffix(token).unwrap_or_else(|| token.to_string())
    }
}

impl Lemmatizer for TableLemmatizer {
    fn lemmatize(&self, token: &str) -> String {
        let mut current = token.to_string();
        loop {
            let next = self.step(&current);
            if next == current {
                return current;
            }
            current = next;
        }
    }

    fn checksum(&self) -> String {
        self.checksum.clone()
    }
}

fn is_cyrillic_word(token: &str) -> bool {
    token
        .chars()
        .all(|c| matches!(c, 'а'..='я' | 'ё' | '-'))
}

/// Removes the longest listed suffix that leaves at least three characters.
fn strip_suffix(token: &str) -> Option<String> {
    if !is_cyrillic_word(token) {
        return None;
    }
    let total = token.chars().count();
    SUFFIXES
        .iter()
        .filter(|suffix| token.ends_with(*suffix))
        .filter(|suffix| total - suffix.chars().count() >= MIN_STEM_CHARS)
        .max_by_key(|suffix| suffix.chars().count())
        .map(|suffix| token[..token.len() - suffix.len()].to_string())
}
