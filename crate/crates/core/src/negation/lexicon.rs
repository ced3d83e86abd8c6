use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::{DiseaseId, DiseaseLabel, Document};
use crate::error::{Error, Result};
use crate::textnorm::contains_phrase;

const PACKAGED_LEXICON: &str = include_str!("../../data/lexicon.tsv");

/// Lemma n-grams that name each disease, for the term-search baseline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermLexicon {
    terms: BTreeMap<DiseaseId, Vec<Vec<String>>>,
}

impl TermLexicon {
    /// Lexicon for the five canonical diseases.
    pub fn packaged() -> Self {
        Self::parse(PACKAGED_LEXICON).expect("packaged lexicon is well formed")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content)
    }

    /// Parses `disease<TAB>lemma n-gram` lines.
    pub fn parse(content: &str) -> Result<Self> {
        let mut lexicon = TermLexicon { terms: BTreeMap::new() };
        for (n, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (disease, term) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(Some(n + 1), "expected disease<TAB>lemma n-gram"))?;
            lexicon
                .add(DiseaseId::new(disease.trim()), term)
                .map_err(|e| Error::format(Some(n + 1), e.to_string()))?;
        }
        Ok(lexicon)
    }

    pub fn add(&mut self, disease: DiseaseId, term: &str) -> Result<()> {
        let term: Vec<String> = term.split_whitespace().map(str::to_lowercase).collect();
        if term.is_empty() || disease.as_str().is_empty() {
            return Err(Error::InvalidArgument("lexicon entries need a disease and a term".into()));
        }
        let entry = self.terms.entry(disease).or_default();
        if !entry.contains(&term) {
            entry.push(term);
        }
        Ok(())
    }

    /// Merges `other` into this lexicon.
    pub fn extend(&mut self, other: TermLexicon) {
        for (disease, terms) in other.terms {
            let entry = self.terms.entry(disease).or_default();
            for t in terms {
                if !entry.contains(&t) {
                    entry.push(t);
                }
            }
        }
    }

    pub fn diseases(&self) -> impl Iterator<Item = &DiseaseId> {
        self.terms.keys()
    }

    pub fn terms(&self, disease: &DiseaseId) -> Result<&[Vec<String>]> {
        self.terms
            .get(disease)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownDisease(disease.to_string()))
    }
}

/// 1 when any lexicon term for `disease` occurs in a sentence of `doc`, else
/// 0. Never -1: term search cannot see negation.
pub fn term_search_label(lexicon: &TermLexicon, doc: &Document, disease: &DiseaseId) -> Result<DiseaseLabel> {
    let terms = lexicon.terms(disease)?;
    let sentences = doc.normalized_sentences()?;
    Ok(if terms.iter().any(|t| contains_phrase(sentences, t)) {
        DiseaseLabel::Present
    } else {
        DiseaseLabel::Absent
    })
}
