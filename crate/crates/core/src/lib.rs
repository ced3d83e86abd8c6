//! Negation detection for Russian clinical free text.
//!
//! Documents are normalized into lemmatized sentences, vectorized with
//! TF-IDF over lemma unigrams and bigrams, and classified per disease as
//! denied (-1), not mentioned (0) or present (1) by gradient-boosted trees.
//! Sentence attributions derived from the trees locate the denials so they
//! can be stripped before downstream feature extraction.

pub mod bundle;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod negation;
pub mod sparse;
pub mod textnorm;
pub mod trees;
pub mod vectorizer;

pub use bundle::{load_model, save_model, ModelBundle};
pub use corpus::{DiseaseId, DiseaseLabel, Document};
pub use error::{Error, Result};
pub use negation::{NegationDetector, TermLexicon};
pub use sparse::SparseVector;
pub use textnorm::Normalizer;
