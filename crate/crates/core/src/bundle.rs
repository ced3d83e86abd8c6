//! Versioned JSON persistence for trained detectors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{DiseaseId, Document};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::negation::{DetectorParams, NegationDetector};
use crate::textnorm::Normalizer;
use crate::trees::GbdtModel;
use crate::vectorizer::TfIdfModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub params: DetectorParams,
    pub corpus_fingerprint: String,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub disease: DiseaseId,
    pub tfidf: TfIdfModel,
    pub classifier: GbdtModel,
    pub tau: f64,
    pub lemma_checksum: String,
    pub metadata: TrainingMetadata,
}

impl ModelBundle {
    pub fn new(detector: NegationDetector, normalizer: &Normalizer, metadata: TrainingMetadata) -> Self {
        ModelBundle {
            format_version: FORMAT_VERSION,
            disease: detector.disease,
            tfidf: detector.tfidf,
            classifier: detector.classifier,
            tau: detector.tau,
            lemma_checksum: normalizer.lemmatizer().checksum(),
            metadata,
        }
    }

    pub fn detector(&self) -> NegationDetector {
        NegationDetector {
            disease: self.disease.clone(),
            tfidf: self.tfidf.clone(),
            classifier: self.classifier.clone(),
            tau: self.tau,
        }
    }

    /// A warning when the model was trained with a different lemma table.
    pub fn lemmatizer_warning(&self, normalizer: &Normalizer) -> Option<String> {
        let current = normalizer.lemmatizer().checksum();
        (current != self.lemma_checksum).then(|| {
            format!(
                "model for {} was trained with lemma table {}, current table is {}",
                self.disease, self.lemma_checksum, current
            )
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format(None, e.to_string()))
    }

    /// Parses a bundle, checking the format version before anything else.
    pub fn from_json(content: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(content).map_err(|e| Error::format(Some(e.line()), e.to_string()))?;
        let version = value
            .get("format_version")
            .ok_or_else(|| Error::format(None, "model file has no format_version"))?;
        match version.as_u64() {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            _ => {
                return Err(Error::Compatibility(format!(
                    "unsupported model format_version {version}, expected {FORMAT_VERSION}"
                )))
            }
        }
        let bundle: ModelBundle = serde_json::from_value(value).map_err(|e| Error::format(None, e.to_string()))?;
        bundle.validate()?;
        Ok(bundle)
    }

    fn validate(&self) -> Result<()> {
        if self.classifier.n_classes != 3 {
            return Err(Error::format(
                None,
                format!("classifier has {} classes, expected 3", self.classifier.n_classes),
            ));
        }
        if self.classifier.n_features != self.tfidf.dim() {
            return Err(Error::format(
                None,
                format!(
                    "classifier expects {} features but the vocabulary has {}",
                    self.classifier.n_features,
                    self.tfidf.dim()
                ),
            ));
        }
        for tree in self.classifier.all_trees() {
            tree.validate()?;
        }
        Ok(())
    }
}

pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut json = bundle.to_json()?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelBundle::from_json(&content)
}

/// SHA-256 over document ids, texts and labels in corpus order.
pub fn corpus_fingerprint(docs: &[Document]) -> String {
    let mut hasher = Sha256::new();
    for d in docs {
        hasher.update(d.id.as_bytes());
        hasher.update([0]);
        hasher.update(d.text.as_bytes());
        hasher.update([0]);
        for (disease, label) in &d.labels {
            hasher.update(disease.as_str().as_bytes());
            hasher.update(label.value().to_le_bytes());
        }
        hasher.update([0xff]);
    }
    hex::encode(hasher.finalize())
}
