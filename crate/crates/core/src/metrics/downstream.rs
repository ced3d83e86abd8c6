//! Downstream prediction with diagnosis features extracted with and without
//! the negation detector.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{binary_f1, stratified_split};
use crate::corpus::{DiseaseId, DiseaseLabel, Document};
use crate::error::{Error, Result};
use crate::negation::{term_search_label, NegationDetector, TermLexicon};
use crate::sparse::SparseVector;
use crate::textnorm::Normalizer;
use crate::trees::{fit_gbdt, fit_random_forest, ForestParams, GbdtParams, KnnModel, Objective};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NdMode {
    Without,
    With,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    TextOnly,
    TextAndOther,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    Gbdt,
    RandomForest,
    Knn,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [ModelFamily::Gbdt, ModelFamily::RandomForest, ModelFamily::Knn];
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Gbdt => "gbdt",
            ModelFamily::RandomForest => "random-forest",
            ModelFamily::Knn => "knn",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamParams {
    pub gbdt: GbdtParams,
    pub forest: ForestParams,
    pub knn_k: usize,
    pub test_fraction: f64,
}

impl Default for DownstreamParams {
    fn default() -> Self {
        DownstreamParams {
            gbdt: GbdtParams::downstream(),
            forest: ForestParams::default(),
            knn_k: 10,
            test_fraction: 0.33,
        }
    }
}

/// Test-set F1 of the positive class for one experiment cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamResult {
    pub task: String,
    pub family: ModelFamily,
    pub features: FeatureMode,
    pub nd: NdMode,
    pub f1: f64,
}

/// One binary feature per lexicon disease, in lexicon order.
///
/// Without ND a feature is the term-search label. With ND it is the
/// term-search label after that disease's detector has stripped its flagged
/// sentences, so documents with nothing flagged get identical features in
/// both modes. The document must be normalized.
pub fn extract_diagnosis_features(
    doc: &Document,
    lexicon: &TermLexicon,
    detectors: Option<&[NegationDetector]>,
    nd: NdMode,
    normalizer: &Normalizer,
) -> Result<Vec<f64>> {
    doc.normalized_sentences()?;
    lexicon
        .diseases()
        .map(|disease| {
            let present = match nd {
                NdMode::Without => term_search_label(lexicon, doc, disease)? == DiseaseLabel::Present,
                NdMode::With => {
                    let det = detector_for(detectors, disease)?;
                    let stripped = det.strip_negations(doc, normalizer)?;
                    term_search_label(lexicon, &stripped, disease)? == DiseaseLabel::Present
                }
            };
            Ok(if present { 1.0 } else { 0.0 })
        })
        .collect()
}

fn detector_for<'a>(detectors: Option<&'a [NegationDetector]>, disease: &DiseaseId) -> Result<&'a NegationDetector> {
    detectors
        .unwrap_or_default()
        .iter()
        .find(|d| &d.disease == disease)
        .ok_or_else(|| Error::Precondition(format!("no negation detector for {disease}")))
}

fn lab_columns(docs: &[Document]) -> Result<Vec<String>> {
    let names: Vec<String> = docs[0].features.keys().cloned().collect();
    for d in docs {
        if !d.features.keys().eq(names.iter()) {
            return Err(Error::Precondition(format!(
                "document {:?} has lab features {:?}, expected {:?}",
                d.id,
                d.features.keys().collect::<Vec<_>>(),
                names
            )));
        }
    }
    Ok(names)
}

/// Trains every model family on text-only and text-plus-lab features, with
/// and without negation detection, and reports test F1 of the positive class.
///
/// All twelve cells share one stratified split on the task target. Documents
/// must be normalized and carry the target; `detectors` must cover every
/// lexicon disease.
pub fn run_downstream_experiment(
    docs: &[Document],
    task: &str,
    lexicon: &TermLexicon,
    detectors: &[NegationDetector],
    params: &DownstreamParams,
    seed: u64,
    normalizer: &Normalizer,
) -> Result<Vec<DownstreamResult>> {
    if docs.is_empty() {
        return Err(Error::InvalidArgument("downstream experiment needs documents".into()));
    }
    let y: Vec<usize> = docs
        .iter()
        .map(|d| match d.targets.get(task) {
            Some(&v) if v <= 1 => Ok(v as usize),
            Some(&v) => Err(Error::Precondition(format!("document {:?} has non-binary {task} = {v}", d.id))),
            None => Err(Error::Precondition(format!("document {:?} has no {task} target", d.id))),
        })
        .collect::<Result<_>>()?;
    let labs = lab_columns(docs)?;
    let (train_idx, test_idx) = stratified_split(&y, params.test_fraction, seed)?;

    let mut text: BTreeMap<NdMode, Vec<Vec<f64>>> = BTreeMap::new();
    for nd in [NdMode::Without, NdMode::With] {
        let rows = docs
            .par_iter()
            .map(|d| extract_diagnosis_features(d, lexicon, Some(detectors), nd, normalizer))
            .collect::<Result<_>>()?;
        text.insert(nd, rows);
    }

    let mut cells = Vec::new();
    for nd in [NdMode::Without, NdMode::With] {
        for features in [FeatureMode::TextOnly, FeatureMode::TextAndOther] {
            for family in ModelFamily::ALL {
                cells.push((family, features, nd));
            }
        }
    }
    let matrix = |nd: NdMode, features: FeatureMode| -> Vec<SparseVector> {
        docs.iter()
            .zip(&text[&nd])
            .map(|(d, t)| {
                let mut row = t.clone();
                if features == FeatureMode::TextAndOther {
                    row.extend(labs.iter().map(|name| d.features[name]));
                }
                SparseVector::from_dense(&row)
            })
            .collect()
    };
    let pick = |x: &[SparseVector], idx: &[usize]| -> Vec<SparseVector> { idx.iter().map(|&i| x[i].clone()).collect() };
    let train_y: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
    let test_y: Vec<usize> = test_idx.iter().map(|&i| y[i]).collect();

    cells
        .into_par_iter()
        .map(|(family, features, nd)| {
            let x = matrix(nd, features);
            let (train_x, test_x) = (pick(&x, &train_idx), pick(&x, &test_idx));
            let predicted: Vec<usize> = match family {
                ModelFamily::Gbdt => {
                    let gbdt = GbdtParams {
                        objective: Objective::BinaryLogistic,
                        seed,
                        ..params.gbdt
                    };
                    let model = fit_gbdt(&train_x, &train_y, 2, &gbdt)?;
                    test_x.iter().map(|r| model.predict(r)).collect::<Result<_>>()?
                }
                ModelFamily::RandomForest => {
                    let forest = ForestParams { seed, ..params.forest };
                    let model = fit_random_forest(&train_x, &train_y, 2, &forest)?;
                    test_x.iter().map(|r| model.predict(r)).collect::<Result<_>>()?
                }
                ModelFamily::Knn => {
                    let model = KnnModel::fit(&train_x, &train_y, 2, params.knn_k)?;
                    test_x.iter().map(|r| model.predict(r)).collect()
                }
            };
            Ok(DownstreamResult {
                task: task.to_string(),
                family,
                features,
                nd,
                f1: binary_f1(&test_y, &predicted, 1)?,
            })
        })
        .collect()
}

pub const DOWNSTREAM_HEADER: &str =
    "task\tmodel\tf1_without_nd_text\tf1_with_nd_text\tf1_without_nd_text_other\tf1_with_nd_text_other";

/// Tab-separated table with one row per (task, model family).
pub fn render_downstream_table(results: &[DownstreamResult]) -> String {
    let mut out = String::from(DOWNSTREAM_HEADER);
    out.push('\n');
    let mut tasks: Vec<&str> = Vec::new();
    for r in results {
        if !tasks.contains(&r.task.as_str()) {
            tasks.push(&r.task);
        }
    }
    let columns = [
        (NdMode::Without, FeatureMode::TextOnly),
        (NdMode::With, FeatureMode::TextOnly),
        (NdMode::Without, FeatureMode::TextAndOther),
        (NdMode::With, FeatureMode::TextAndOther),
    ];
    for task in tasks {
        for family in ModelFamily::ALL {
            if !results.iter().any(|r| r.task == task && r.family == family) {
                continue;
            }
            let _ = write!(out, "{task}\t{family}");
            for (nd, features) in columns {
                let cell = results
                    .iter()
                    .find(|r| r.task == task && r.family == family && r.nd == nd && r.features == features);
                match cell {
                    Some(r) => {
                        let _ = write!(out, "\t{:.4}", r.f1);
                    }
                    None => out.push_str("\t-"),
                }
            }
            out.push('\n');
        }
    }
    out
}
