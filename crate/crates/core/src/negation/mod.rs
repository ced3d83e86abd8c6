//! Per-disease negation detector: training, document classification into
//! denied / absent / present, the term-search baseline, sentence attribution
//! and negation stripping.

mod lexicon;

pub use lexicon::{term_search_label, TermLexicon};

use std::borrow::Cow;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DiseaseId, DiseaseLabel, Document};
use crate::error::{Error, Result};
use crate::metrics::{stratified_split, MetricsReport};
use crate::textnorm::{Normalizer, Span};
use crate::trees::{decompose_prediction, fit_gbdt, GbdtModel, GbdtParams, Objective};
use crate::vectorizer::{TfIdfModel, VectorizerParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub gbdt: GbdtParams,
    pub vectorizer: VectorizerParams,
    pub test_fraction: f64,
    /// Sentences whose attribution toward "denied" exceeds this are flagged.
    pub tau: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            gbdt: GbdtParams::default(),
            vectorizer: VectorizerParams::default(),
            test_fraction: 0.33,
            tau: 0.0,
        }
    }
}

/// TF-IDF model plus a three-class boosted classifier for one disease. Class
/// indices are 0 → -1, 1 → 0, 2 → 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegationDetector {
    pub disease: DiseaseId,
    pub tfidf: TfIdfModel,
    pub classifier: GbdtModel,
    pub tau: f64,
}

/// Attribution of one sentence toward the "denied" class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceAttribution {
    pub span: Span,
    pub score: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub label: DiseaseLabel,
    pub probabilities: [f64; 3],
    /// Base value of the "denied" raw score.
    pub base: f64,
    pub sentences: Vec<SentenceAttribution>,
    /// Contribution of features absent from the document (splits taken on
    /// the zero side); it belongs to no sentence.
    pub residual: f64,
}

impl AttributionReport {
    pub fn flagged(&self) -> impl Iterator<Item = &SentenceAttribution> {
        self.sentences.iter().filter(|s| s.flagged)
    }
}

fn ensure_normalized<'a>(doc: &'a Document, normalizer: &Normalizer) -> Cow<'a, Document> {
    if doc.is_normalized() {
        Cow::Borrowed(doc)
    } else {
        Cow::Owned(normalizer.normalize_document(doc))
    }
}

impl NegationDetector {
    pub fn class_count(&self) -> usize {
        self.classifier.n_classes
    }

    fn probabilities(&self, doc: &Document) -> Result<[f64; 3]> {
        let x = self.tfidf.transform(doc)?;
        let p = self.classifier.predict_proba(&x)?;
        Ok([p[0], p[1], p[2]])
    }

    /// Label and probabilities in the order (-1, 0, 1). Normalizes the
    /// document first when needed.
    pub fn classify(&self, doc: &Document, normalizer: &Normalizer) -> Result<(DiseaseLabel, [f64; 3])> {
        let doc = ensure_normalized(doc, normalizer);
        let p = self.probabilities(&doc)?;
        Ok((label_of(&p), p))
    }

    /// Per-sentence share of the "denied" raw score.
    ///
    /// A term's contribution is split between the sentences containing it in
    /// proportion to its count in each. Sentences are flagged when their score
    /// exceeds `tau` and the document as a whole is classified -1.
    pub fn attribute_sentences(&self, doc: &Document, normalizer: &Normalizer) -> Result<AttributionReport> {
        let doc = ensure_normalized(doc, normalizer);
        let x = self.tfidf.transform(&doc)?;
        let p = self.classifier.predict_proba(&x)?;
        let probabilities = [p[0], p[1], p[2]];
        let label = label_of(&probabilities);
        let denied = DiseaseLabel::Denied.class_index();
        let decomposition = decompose_prediction(&self.classifier, &x, denied)?;

        let per_sentence = self.tfidf.sentence_term_counts(&doc)?;
        let mut totals: BTreeMap<usize, u32> = BTreeMap::new();
        for counts in &per_sentence {
            for &(t, c) in counts {
                *totals.entry(t).or_default() += c;
            }
        }
        let sentences = doc.normalized_sentences()?;
        let attributions = sentences
            .iter()
            .zip(&per_sentence)
            .map(|(s, counts)| {
                let score: f64 = counts
                    .iter()
                    .map(|&(t, c)| decomposition.contributions[t] * c as f64 / totals[&t] as f64)
                    .sum();
                SentenceAttribution {
                    span: s.span,
                    score,
                    flagged: label == DiseaseLabel::Denied && score > self.tau,
                }
            })
            .collect();
        let residual = decomposition
            .contributions
            .iter()
            .enumerate()
            .filter(|(t, _)| !totals.contains_key(t))
            .map(|(_, c)| c)
            .sum();
        Ok(AttributionReport {
            label,
            probabilities,
            base: decomposition.base,
            sentences: attributions,
            residual,
        })
    }

    /// Removes flagged sentences until none remain flagged, so the result is
    /// a fixed point. Kept text is byte-identical; a document with nothing
    /// flagged is returned unchanged.
    pub fn strip_negations(&self, doc: &Document, normalizer: &Normalizer) -> Result<Document> {
        let mut current: Option<Document> = None;
        loop {
            let working = current.as_ref().unwrap_or(doc);
            let report = self.attribute_sentences(working, normalizer)?;
            let flagged: Vec<Span> = report.flagged().map(|s| s.span).collect();
            if flagged.is_empty() {
                return Ok(current.unwrap_or_else(|| doc.clone()));
            }
            let mut next = working.clone();
            next.text = remove_spans(&working.text, &flagged);
            current = Some(normalizer.normalize_document(&next));
        }
    }
}

fn label_of(p: &[f64; 3]) -> DiseaseLabel {
    let mut best = 0;
    for k in 1..3 {
        if p[k] > p[best] {
            best = k;
        }
    }
    DiseaseLabel::ALL[best]
}

/// Deletes each span together with the whitespace after it. Whitespace
/// before a span is also deleted when the span opens or closes the text.
fn remove_spans(text: &str, spans: &[Span]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for span in spans {
        let gap = &text[cursor..span.start];
        if out.is_empty() {
            out.push_str(gap.trim_start());
        } else {
            out.push_str(gap);
        }
        let rest = &text[span.end..];
        cursor = span.end + (rest.len() - rest.trim_start().len());
    }
    if cursor == text.len() {
        out.truncate(out.trim_end().len());
    } else {
        out.push_str(&text[cursor..]);
    }
    out
}

fn labels_for(docs: &[Document], disease: &DiseaseId) -> Result<Vec<DiseaseLabel>> {
    docs.iter()
        .map(|d| {
            d.label(disease).ok_or_else(|| {
                Error::Precondition(format!("document {:?} has no label for {disease}", d.id))
            })
        })
        .collect()
}

/// Trains on a stratified split and evaluates on the held-out part.
///
/// The TF-IDF model and classifier see only the training documents. `seed`
/// drives both the split and the booster.
pub fn train_detector(
    docs: &[Document],
    disease: &DiseaseId,
    params: &DetectorParams,
    seed: u64,
) -> Result<(NegationDetector, MetricsReport)> {
    let labels = labels_for(docs, disease)?;
    for d in docs {
        d.normalized_sentences()?;
    }
    let classes: Vec<usize> = labels.iter().map(|l| l.class_index()).collect();
    let (train_idx, test_idx) = stratified_split(&classes, params.test_fraction, seed)?;

    let train: Vec<Document> = train_idx.iter().map(|&i| docs[i].clone()).collect();
    let train_y: Vec<usize> = train_idx.iter().map(|&i| classes[i]).collect();
    for label in DiseaseLabel::ALL {
        if !train_y.contains(&label.class_index()) {
            return Err(Error::Training(format!(
                "label {label} for {disease} is absent from the training data"
            )));
        }
    }
    let detector = fit_detector_on(&train, &train_y, disease, params, seed)?;

    let truth: Vec<DiseaseLabel> = test_idx.iter().map(|&i| labels[i]).collect();
    let predicted: Vec<DiseaseLabel> = test_idx
        .par_iter()
        .map(|&i| detector.probabilities(&docs[i]).map(|p| label_of(&p)))
        .collect::<Result<_>>()?;
    let report = MetricsReport::from_labels(&truth, &predicted)?;
    Ok((detector, report))
}

fn fit_detector_on(
    train: &[Document],
    y: &[usize],
    disease: &DiseaseId,
    params: &DetectorParams,
    seed: u64,
) -> Result<NegationDetector> {
    let tfidf = TfIdfModel::fit(train, params.vectorizer)?;
    let x = tfidf.transform_all(train)?;
    let gbdt = GbdtParams {
        objective: Objective::Softmax,
        seed,
        ..params.gbdt
    };
    let classifier = fit_gbdt(&x, y, DiseaseLabel::ALL.len(), &gbdt)?;
    Ok(NegationDetector {
        disease: disease.clone(),
        tfidf,
        classifier,
        tau: params.tau,
    })
}

/// Trains one detector per disease, in parallel. Output order follows
/// `diseases`.
pub fn train_detectors(
    docs: &[Document],
    diseases: &[DiseaseId],
    params: &DetectorParams,
    seed: u64,
) -> Result<Vec<(NegationDetector, MetricsReport)>> {
    diseases
        .par_iter()
        .map(|d| train_detector(docs, d, params, seed))
        .collect()
}

pub fn classify_document(
    detector: &NegationDetector,
    doc: &Document,
    normalizer: &Normalizer,
) -> Result<(DiseaseLabel, [f64; 3])> {
    detector.classify(doc, normalizer)
}

pub fn attribute_sentences(
    detector: &NegationDetector,
    doc: &Document,
    normalizer: &Normalizer,
) -> Result<AttributionReport> {
    detector.attribute_sentences(doc, normalizer)
}

pub fn strip_negations(detector: &NegationDetector, doc: &Document, normalizer: &Normalizer) -> Result<Document> {
    detector.strip_negations(doc, normalizer)
}

/// Disagreement between term search and the detector, as fractions of all
/// documents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    /// Term search says 1, the detector says -1.
    pub fp_rate: f64,
    /// Term search says 0, the detector says 1.
    pub fn_rate: f64,
}

/// Counts the two disagreement patterns over paired labels.
pub fn disagreement_rates(term: &[DiseaseLabel], classifier: &[DiseaseLabel]) -> Result<Disagreement> {
    if term.is_empty() {
        return Err(Error::InvalidArgument("no documents to compare".into()));
    }
    if term.len() != classifier.len() {
        return Err(Error::InvalidArgument("label lists differ in length".into()));
    }
    let n = term.len() as f64;
    let count = |t: DiseaseLabel, c: DiseaseLabel| {
        term.iter()
            .zip(classifier)
            .filter(|&(&a, &b)| a == t && b == c)
            .count() as f64
    };
    Ok(Disagreement {
        fp_rate: count(DiseaseLabel::Present, DiseaseLabel::Denied) / n,
        fn_rate: count(DiseaseLabel::Absent, DiseaseLabel::Present) / n,
    })
}

pub fn compare_baseline(
    detector: &NegationDetector,
    lexicon: &TermLexicon,
    docs: &[Document],
    normalizer: &Normalizer,
) -> Result<Disagreement> {
    if docs.is_empty() {
        return Err(Error::InvalidArgument("no documents to compare".into()));
    }
    let pairs: Vec<(DiseaseLabel, DiseaseLabel)> = docs
        .par_iter()
        .map(|d| {
            let d = ensure_normalized(d, normalizer);
            let term = term_search_label(lexicon, &d, &detector.disease)?;
            let (clf, _) = detector.classify(&d, normalizer)?;
            Ok((term, clf))
        })
        .collect::<Result<_>>()?;
    let (term, clf): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    disagreement_rates(&term, &clf)
}
