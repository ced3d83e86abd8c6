//! Lemma n-gram vocabulary and TF-IDF weighting.
//!
//! Terms are unigrams and within-sentence bigrams of lemmas joined by a single
//! space. Weights are raw counts times the smoothed inverse document
//! frequency `ln((1 + N) / (1 + df)) + 1`, and every vector is scaled to unit
//! Euclidean norm.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::sparse::SparseVector;
use crate::textnorm::Sentence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorizerParams {
    /// Minimum number of documents a term must occur in.
    pub min_df: usize,
    /// Largest n-gram length, 1 or 2.
    pub max_ngram: usize,
}

impl Default for VectorizerParams {
    fn default() -> Self {
        VectorizerParams { min_df: 1, max_ngram: 2 }
    }
}

/// Terms of one sentence in occurrence order: unigrams first, then bigrams.
pub fn sentence_terms(sentence: &Sentence, max_ngram: usize) -> Vec<String> {
    let lemmas: Vec<&str> = sentence.lemmas().collect();
    let mut terms: Vec<String> = lemmas.iter().map(|l| l.to_string()).collect();
    if max_ngram >= 2 {
        terms.extend(lemmas.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    }
    terms
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
    max_ngram: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    n_docs: usize,
    max_ngram: usize,
    terms: Vec<String>,
    df: Vec<usize>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.terms, r.df, r.n_docs, r.max_ngram)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            n_docs: v.n_docs,
            max_ngram: v.max_ngram,
            terms: v.terms,
            df: v.df,
        }
    }
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, df: Vec<usize>, n_docs: usize, max_ngram: usize) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            terms,
            df,
            n_docs,
            max_ngram,
            index,
        }
    }

    /// Collects every term occurring in at least `min_df` documents. Indices
    /// follow lexicographic term order.
    pub fn build(docs: &[Document], params: VectorizerParams) -> Result<Self> {
        if !(1..=2).contains(&params.max_ngram) {
            return Err(Error::InvalidArgument(format!(
                "n-gram length must be 1 or 2, got {}",
                params.max_ngram
            )));
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let mut seen: Vec<String> = doc
                .normalized_sentences()?
                .iter()
                .flat_map(|s| sentence_terms(s, params.max_ngram))
                .collect();
            seen.sort();
            seen.dedup();
            for term in seen {
                *df.entry(term).or_default() += 1;
            }
        }
        let (terms, df): (Vec<String>, Vec<usize>) =
            df.into_iter().filter(|(_, n)| *n >= params.min_df.max(1)).unzip();
        Ok(Self::from_parts(terms, df, docs.len(), params.max_ngram))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn max_ngram(&self) -> usize {
        self.max_ngram
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self, index: usize) -> usize {
        self.df[index]
    }
}

/// Vocabulary plus per-term idf weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub vocabulary: Vocabulary,
    idf: Vec<f64>,
}

pub fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

impl TfIdfModel {
    pub fn from_vocabulary(vocabulary: Vocabulary) -> Self {
        let idf = (0..vocabulary.len())
            .map(|i| smoothed_idf(vocabulary.n_docs, vocabulary.df[i]))
            .collect();
        TfIdfModel { vocabulary, idf }
    }

    pub fn fit(docs: &[Document], params: VectorizerParams) -> Result<Self> {
        Ok(Self::from_vocabulary(Vocabulary::build(docs, params)?))
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn idf(&self, index: usize) -> f64 {
        self.idf[index]
    }

    /// Per-sentence `(term index, count)` lists for in-vocabulary terms.
    pub fn sentence_term_counts(&self, doc: &Document) -> Result<Vec<Vec<(usize, u32)>>> {
        Ok(doc
            .normalized_sentences()?
            .iter()
            .map(|s| {
                let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
                for term in sentence_terms(s, self.vocabulary.max_ngram) {
                    if let Some(i) = self.vocabulary.index_of(&term) {
                        *counts.entry(i).or_default() += 1;
                    }
                }
                counts.into_iter().collect()
            })
            .collect())
    }

    /// Count × idf, L2-normalized. Unknown terms are ignored; a document with
    /// no known term maps to the zero vector.
    pub fn transform(&self, doc: &Document) -> Result<SparseVector> {
        let pairs = self
            .sentence_term_counts(doc)?
            .into_iter()
            .flatten()
            .map(|(i, c)| (i, c as f64));
        let mut counted = SparseVector::from_pairs(self.dim(), pairs)?;
        let weighted: Vec<(usize, f64)> = counted.iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        counted = SparseVector::from_pairs(self.dim(), weighted)?;
        let norm = counted.norm();
        if norm > 0.0 {
            counted.scale(1.0 / norm);
        }
        Ok(counted)
    }

    pub fn transform_all(&self, docs: &[Document]) -> Result<Vec<SparseVector>> {
        use rayon::prelude::*;
        docs.par_iter().map(|d| self.transform(d)).collect()
    }
}

pub fn fit_transform(docs: &[Document], params: VectorizerParams) -> Result<(TfIdfModel, Vec<SparseVector>)> {
    let model = TfIdfModel::fit(docs, params)?;
    let vectors = model.transform_all(docs)?;
    Ok((model, vectors))
}
