//! Classification metrics, stratified splitting and the downstream
//! experiment harness.

mod downstream;

pub use downstream::{
    extract_diagnosis_features, render_downstream_table, run_downstream_experiment, DownstreamParams,
    DownstreamResult, FeatureMode, ModelFamily, NdMode, DOWNSTREAM_HEADER,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DiseaseId, DiseaseLabel};
use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes, both in the order given
/// when the matrix was built.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<usize>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidArgument("confusion matrix must be square and non-empty".into()));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, k: usize) -> usize {
        self.counts[k].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> usize {
        self.counts.iter().map(|row| row[k]).sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.n_classes()).map(|k| self.counts[k][k]).sum()
    }
}

pub fn confusion_matrix<T: PartialEq + std::fmt::Debug>(
    truth: &[T],
    predicted: &[T],
    order: &[T],
) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidArgument(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no labels to compare".into()));
    }
    let position = |label: &T| {
        order
            .iter()
            .position(|o| o == label)
            .ok_or_else(|| Error::InvalidArgument(format!("label {label:?} not in class order")))
    };
    let mut counts = vec![vec![0; order.len()]; order.len()];
    for (t, p) in truth.iter().zip(predicted) {
        counts[position(t)?][position(p)?] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub per_class: Vec<f64>,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Classes missing from both truth and prediction; their F1 is 0.
    pub absent_classes: Vec<usize>,
}

/// Per-class F1 with 0/0 read as 0, their unweighted mean, and accuracy.
pub fn f1_scores(cm: &ConfusionMatrix) -> F1Scores {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut per_class = Vec::with_capacity(cm.n_classes());
    let mut absent_classes = Vec::new();
    for k in 0..cm.n_classes() {
        let tp = cm.get(k, k);
        let (precision, recall) = (ratio(tp, cm.col_sum(k)), ratio(tp, cm.row_sum(k)));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if cm.row_sum(k) == 0 && cm.col_sum(k) == 0 {
            absent_classes.push(k);
        }
        per_class.push(f1);
    }
    let macro_f1 = per_class.iter().sum::<f64>() / per_class.len() as f64;
    F1Scores {
        per_class,
        macro_f1,
        accuracy: ratio(cm.trace(), cm.total()),
        absent_classes,
    }
}

/// F1 of class `positive` in a binary task.
pub fn binary_f1(truth: &[usize], predicted: &[usize], positive: usize) -> Result<f64> {
    let cm = confusion_matrix(truth, predicted, &[0, 1])?;
    Ok(f1_scores(&cm).per_class[positive])
}

/// Evaluation summary of a negation detector, laid out like the per-disease
/// results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Class labels in column order (-1, 0, 1).
    pub classes: Vec<DiseaseLabel>,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// True-class counts per class.
    pub support: Vec<usize>,
    pub n_samples: usize,
    pub absent_classes: Vec<DiseaseLabel>,
    pub fp_rate: Option<f64>,
    pub fn_rate: Option<f64>,
}

impl MetricsReport {
    pub fn from_labels(truth: &[DiseaseLabel], predicted: &[DiseaseLabel]) -> Result<Self> {
        let order = DiseaseLabel::ALL;
        let cm = confusion_matrix(truth, predicted, &order)?;
        let scores = f1_scores(&cm);
        Ok(MetricsReport {
            classes: order.to_vec(),
            per_class_f1: scores.per_class,
            macro_f1: scores.macro_f1,
            accuracy: scores.accuracy,
            support: (0..order.len()).map(|k| cm.row_sum(k)).collect(),
            n_samples: cm.total(),
            absent_classes: scores.absent_classes.into_iter().map(|k| order[k]).collect(),
            fp_rate: None,
            fn_rate: None,
        })
    }
}

pub const METRICS_HEADER: &str = "disease\tannotated\tf1_denied(-1)\tf1_absent(0)\tf1_present(1)\tmacro_f1\taccuracy\tfp_rate\tfn_rate";

/// Tab-separated table, one row per disease. Disagreement rates are
/// fractions of the evaluated documents; `-` when not computed.
pub fn render_metrics_table(rows: &[(DiseaseId, usize, MetricsReport)]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
    for (disease, annotated, m) in rows {
        let _ = writeln!(
            out,
            "{disease}\t{annotated}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{}\t{}",
            m.per_class_f1[0],
            m.per_class_f1[1],
            m.per_class_f1[2],
            m.macro_f1,
            m.accuracy,
            opt(m.fp_rate),
            opt(m.fn_rate)
        );
    }
    out
}

/// Splits indices into `(train, test)`, preserving each class's share.
///
/// Every class gets `round(fraction · n_c)` test items, clamped so both sides
/// keep at least one. Both index lists are sorted ascending.
pub fn stratified_split<T: Ord + Clone + std::fmt::Debug>(
    labels: &[T],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut by_class: BTreeMap<T, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.clone()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, mut members) in by_class {
        let n = members.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "class {class:?} has {n} member(s); stratification needs at least 2"
            )));
        }
        members.shuffle(&mut rng);
        let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use DiseaseLabel::*;

    #[test]
    fn identity_confusion() {
        let cm = confusion_matrix(&[Denied, Absent, Present], &[Denied, Absent, Present], &DiseaseLabel::ALL).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(cm.get(i, j), usize::from(i == j));
            }
        }
    }

    #[test]
    fn single_off_diagonal() {
        let cm = confusion_matrix(&[Present], &[Denied], &DiseaseLabel::ALL).unwrap();
        assert_eq!(cm.get(2, 0), 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn confusion_errors() {
        assert!(confusion_matrix(&[1, 0], &[1], &[0, 1]).is_err());
        assert!(confusion_matrix(&[2], &[1], &[0, 1]).is_err());
        assert!(confusion_matrix::<i32>(&[], &[], &[0, 1]).is_err());
    }

    #[test]
    fn f1_from_counts() {
        // class 0: TP 2, FP 1, FN 0
        let cm = ConfusionMatrix::from_counts(vec![vec![2, 0], vec![1, 0]]).unwrap();
        let s = f1_scores(&cm);
        assert!((s.per_class[0] - 0.8).abs() < 1e-15);
        assert_eq!(s.per_class[1], 0.0);
        assert!((s.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_flagged() {
        let cm = confusion_matrix(&[Denied, Present], &[Denied, Present], &DiseaseLabel::ALL).unwrap();
        let s = f1_scores(&cm);
        assert_eq!(s.absent_classes, vec![1]);
        assert_eq!(s.per_class, vec![1.0, 0.0, 1.0]);
        assert!((s.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn stratified_split_counts() {
        let labels: Vec<i8> = [(-1, 30), (0, 30), (1, 40)]
            .iter()
            .flat_map(|&(l, n)| std::iter::repeat_n(l, n))
            .collect();
        let (train, test) = stratified_split(&labels, 0.33, 9).unwrap();
        assert_eq!(train.len() + test.len(), 100);
        let count = |l: i8| test.iter().filter(|&&i| labels[i] == l).count();
        assert_eq!((count(-1), count(0), count(1)), (10, 10, 13));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(stratified_split(&labels, 0.33, 9).unwrap(), (train, test));
    }

    #[test]
    fn stratified_split_errors() {
        assert!(stratified_split(&[0, 0, 1], 0.33, 1).is_err());
        assert!(stratified_split(&[0, 0, 1, 1], 0.0, 1).is_err());
        assert!(stratified_split(&[0, 0, 1, 1], 1.0, 1).is_err());
    }

    #[test]
    fn table_has_one_row_per_disease() {
        let m = MetricsReport::from_labels(&[Denied, Absent, Present], &[Denied, Absent, Absent]).unwrap();
        let table = render_metrics_table(&[("MI".into(), 3, m)]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("MI\t3\t1.00\t0.67\t0.00\t0.56\t0.67\t-\t-"), "{}", lines[1]);
    }
}
