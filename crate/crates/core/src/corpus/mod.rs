//! Document model, JSON Lines persistence and phrase-rule annotation.

mod synthetic;

pub use synthetic::{
    generate_synthetic_corpus, templates, LabelMix, SlotKind, SyntheticConfig, SyntheticTemplate,
};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::textnorm::{contains_phrase, Normalizer, Sentence};

/// Disease code; compared case-sensitively.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiseaseId(String);

impl DiseaseId {
    pub const STROKE: &'static str = "stroke";
    pub const MI: &'static str = "MI";
    pub const AH: &'static str = "AH";
    pub const DM: &'static str = "DM";
    pub const AP: &'static str = "AP";

    pub fn new(code: impl Into<String>) -> Self {
        DiseaseId(code.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// stroke, MI, AH, DM, AP.
    pub fn canonical() -> Vec<DiseaseId> {
        [Self::STROKE, Self::MI, Self::AH, Self::DM, Self::AP]
            .into_iter()
            .map(DiseaseId::new)
            .collect()
    }

    pub fn is_canonical(&self) -> bool {
        [Self::STROKE, Self::MI, Self::AH, Self::DM, Self::AP].contains(&self.0.as_str())
    }
}

impl fmt::Display for DiseaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DiseaseId {
    fn from(code: &str) -> Self {
        DiseaseId::new(code)
    }
}

/// Document-level status of one disease.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiseaseLabel {
    /// `-1`: the disease is explicitly denied.
    Denied,
    /// `0`: not mentioned, or mentioned only for someone else.
    Absent,
    /// `1`: the patient has the disease.
    Present,
}

impl DiseaseLabel {
    /// Fixed class order used by classifiers and probability triples.
    pub const ALL: [DiseaseLabel; 3] = [DiseaseLabel::Denied, DiseaseLabel::Absent, DiseaseLabel::Present];

    pub fn value(self) -> i8 {
        match self {
            DiseaseLabel::Denied => -1,
            DiseaseLabel::Absent => 0,
            DiseaseLabel::Present => 1,
        }
    }

    pub fn class_index(self) -> usize {
        (self.value() + 1) as usize
    }

    pub fn from_class_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl TryFrom<i64> for DiseaseLabel {
    type Error = Error;

    fn try_from(value: i64) -> Result<Self> {
        match value {
            -1 => Ok(DiseaseLabel::Denied),
            0 => Ok(DiseaseLabel::Absent),
            1 => Ok(DiseaseLabel::Present),
            other => Err(Error::InvalidArgument(format!(
                "disease label must be -1, 0 or 1, got {other}"
            ))),
        }
    }
}

impl fmt::Display for DiseaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl std::str::FromStr for DiseaseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: i64 = s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("not a disease label: {s:?}")))?;
        DiseaseLabel::try_from(v)
    }
}

impl Serialize for DiseaseLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for DiseaseLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(deserializer)?;
        DiseaseLabel::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// One anamnesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<DiseaseId, DiseaseLabel>,
    /// Binary downstream targets such as `surgery` or `outcome`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub targets: BTreeMap<String, u8>,
    /// Numeric non-text features (lab values) used by downstream models.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub features: BTreeMap<String, f64>,
    /// `None` until the document has been normalized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<Sentence>>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            labels: BTreeMap::new(),
            targets: BTreeMap::new(),
            features: BTreeMap::new(),
            sentences: None,
        }
    }

    pub fn with_label(mut self, disease: impl Into<DiseaseId>, label: DiseaseLabel) -> Self {
        self.labels.insert(disease.into(), label);
        self
    }

    pub fn label(&self, disease: &DiseaseId) -> Option<DiseaseLabel> {
        self.labels.get(disease).copied()
    }

    pub fn is_normalized(&self) -> bool {
        self.sentences.is_some()
    }

    /// Sentences of a normalized document, or a precondition error.
    pub fn normalized_sentences(&self) -> Result<&[Sentence]> {
        self.sentences.as_deref().ok_or_else(|| {
            Error::Precondition(format!("document {:?} has not been normalized", self.id))
        })
    }

    /// Checks the structural invariants that deserialization cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidArgument("document id must not be empty".into()));
        }
        if let Some((name, v)) = self.targets.iter().find(|(_, v)| **v > 1) {
            return Err(Error::InvalidArgument(format!(
                "target {name:?} of {:?} must be 0 or 1, got {v}",
                self.id
            )));
        }
        if let Some(sentences) = &self.sentences {
            let mut prev_end = 0;
            for s in sentences {
                let ok = s.span.start >= prev_end
                    && s.span.start <= s.span.end
                    && s.span.end <= self.text.len()
                    && self.text.is_char_boundary(s.span.start)
                    && self.text.is_char_boundary(s.span.end);
                if !ok {
                    return Err(Error::InvalidArgument(format!(
                        "sentence spans of {:?} are not ordered, disjoint and in bounds",
                        self.id
                    )));
                }
                prev_end = s.span.end;
            }
        }
        Ok(())
    }
}

/// Reads documents from JSON Lines. Blank lines are skipped.
pub fn read_documents<R: BufRead>(reader: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::format(Some(line_no), e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).map_err(|e| Error::format(Some(line_no), e.to_string()))?;
        doc.validate()
            .map_err(|e| Error::format(Some(line_no), e.to_string()))?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_documents(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_documents(std::io::BufReader::new(file))
}

pub fn write_documents<W: Write>(docs: &[Document], mut writer: W) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut writer, doc)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_documents(docs: &[Document], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_documents(docs, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Phrase-search rule: documents whose lemma sequence contains `phrase`
/// receive `label` for `disease`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotationRule {
    pub phrase: Vec<String>,
    pub disease: DiseaseId,
    pub label: DiseaseLabel,
    /// Lower wins when several rules match.
    pub priority: u32,
}

impl AnnotationRule {
    pub fn new(phrase: &str, disease: impl Into<DiseaseId>, label: DiseaseLabel, priority: u32) -> Result<Self> {
        let phrase: Vec<String> = phrase.split_whitespace().map(str::to_lowercase).collect();
        if phrase.is_empty() {
            return Err(Error::InvalidArgument("rule phrase must not be empty".into()));
        }
        Ok(AnnotationRule {
            phrase,
            disease: disease.into(),
            label,
            priority,
        })
    }
}

/// Parses `phrase<TAB>disease<TAB>label<TAB>priority` lines. Blank lines and
/// `#` comments are skipped.
pub fn parse_rules(content: &str) -> Result<Vec<AnnotationRule>> {
    let mut rules = Vec::new();
    for (n, line) in content.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::format(Some(n + 1), msg);
        let fields: Vec<&str> = line.split('\t').collect();
        let [phrase, disease, label, priority] = fields[..] else {
            return Err(bad(format!("expected 4 tab-separated fields, got {}", fields.len())));
        };
        let label: DiseaseLabel = label.parse().map_err(|e: Error| bad(e.to_string()))?;
        let priority: u32 = priority
            .trim()
            .parse()
            .map_err(|_| bad(format!("priority must be a non-negative integer, got {priority:?}")))?;
        rules.push(
            AnnotationRule::new(phrase, disease.trim(), label, priority).map_err(|e| bad(e.to_string()))?,
        );
    }
    Ok(rules)
}

pub fn load_rules(path: impl AsRef<Path>) -> Result<Vec<AnnotationRule>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rules(&content)
}

/// Labels `disease` on every document matched by one of `rules`.
///
/// Rules for other diseases are ignored. Among matching rules the lowest
/// priority number wins, then the earliest rule. Documents with no match keep
/// their labels and are listed in the returned id list for manual review.
pub fn apply_annotation_rules(
    docs: &[Document],
    rules: &[AnnotationRule],
    disease: &DiseaseId,
) -> Result<(Vec<Document>, Vec<String>)> {
    let mut ordered: Vec<(usize, &AnnotationRule)> = rules
        .iter()
        .enumerate()
        .filter(|(_, r)| &r.disease == disease)
        .collect();
    ordered.sort_by_key(|&(i, r)| (r.priority, i));

    let mut labeled = Vec::with_capacity(docs.len());
    let mut unmatched = Vec::new();
    for doc in docs {
        let sentences = doc.normalized_sentences()?;
        let mut out = doc.clone();
        match ordered.iter().find(|(_, r)| contains_phrase(sentences, &r.phrase)) {
            Some((_, rule)) => {
                out.labels.insert(disease.clone(), rule.label);
            }
            None => unmatched.push(doc.id.clone()),
        }
        labeled.push(out);
    }
    Ok((labeled, unmatched))
}

/// Normalizes the phrases of rules written in surface form.
pub fn lemmatize_rules(rules: &[AnnotationRule], normalizer: &Normalizer) -> Vec<AnnotationRule> {
    rules
        .iter()
        .map(|r| AnnotationRule {
            phrase: r.phrase.iter().map(|w| normalizer.lemmatize(w)).collect(),
            ..r.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normalized(id: &str, text: &str) -> Document {
        Normalizer::default().normalize_document(&Document::new(id, text))
    }

    #[test]
    fn reads_labels_from_jsonl() {
        let input = r#"{"id":"a1","text":"ОИМ отрицает.","labels":{"MI":-1}}"#;
        let docs = read_documents(input.as_bytes()).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].label(&"MI".into()), Some(DiseaseLabel::Denied));
    }

    #[test]
    fn empty_input_gives_no_documents() {
        assert!(read_documents("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let input = "{\"id\":\"a1\",\"text\":\"x\"}\n{\"id\":\"a1\",\"text\":\"y\"}\n";
        assert!(matches!(read_documents(input.as_bytes()), Err(Error::DuplicateId(id)) if id == "a1"));
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let input = "{\"id\":\"a1\",\"text\":\"x\"}\n{\"id\":\n";
        let err = read_documents(input.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::DataFormat { line: Some(2), .. }), "{err}");
    }

    #[test]
    fn out_of_range_label_is_a_format_error() {
        let input = r#"{"id":"a1","text":"x","labels":{"MI":2}}"#;
        assert!(matches!(
            read_documents(input.as_bytes()),
            Err(Error::DataFormat { line: Some(1), .. })
        ));
    }

    #[test]
    fn empty_id_is_rejected() {
        let input = r#"{"id":"","text":"x"}"#;
        assert!(read_documents(input.as_bytes()).is_err());
    }

    #[test]
    fn cyrillic_is_written_unescaped() {
        let doc = Document::new("c", "Инфаркт миокарда отрицает.");
        let mut buf = Vec::new();
        write_documents(std::slice::from_ref(&doc), &mut buf).unwrap();
        let s = String::from_utf8(buf.clone()).unwrap();
        assert!(s.contains("Инфаркт миокарда"));
        assert_eq!(read_documents(buf.as_slice()).unwrap(), vec![doc]);
    }

    #[test]
    fn save_and_load_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut doc = normalized("d", "ОИМ отрицает. АД 140/90.").with_label("MI", DiseaseLabel::Denied);
        doc.targets.insert("surgery".into(), 1);
        doc.features.insert("troponin".into(), 0.1 + 0.2);
        save_documents(std::slice::from_ref(&doc), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
        assert_eq!(load_documents(&path).unwrap(), vec![doc]);

        save_documents(&[], &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"");
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = save_documents(&[], "/nonexistent-dir/x/y.jsonl").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn rule_matches_contiguous_lemmas() {
        let doc = normalized("d", "Инфаркт отрицает.");
        let rules = vec![AnnotationRule::new("инфаркт отрицать", "MI", DiseaseLabel::Denied, 0).unwrap()];
        let (labeled, unmatched) = apply_annotation_rules(&[doc], &rules, &"MI".into()).unwrap();
        assert!(unmatched.is_empty());
        assert_eq!(labeled[0].label(&"MI".into()), Some(DiseaseLabel::Denied));
    }

    #[test]
    fn unmatched_documents_keep_their_labels() {
        let doc = normalized("d", "Жалоб нет.").with_label("AH", DiseaseLabel::Present);
        let rules = vec![AnnotationRule::new("оим", "MI", DiseaseLabel::Present, 0).unwrap()];
        let (labeled, unmatched) = apply_annotation_rules(std::slice::from_ref(&doc), &rules, &"MI".into()).unwrap();
        assert_eq!(unmatched, vec!["d".to_string()]);
        assert_eq!(labeled[0], doc);
    }

    #[test]
    fn lowest_priority_number_wins() {
        let doc = normalized("d", "ОИМ отрицает.");
        let rules = vec![
            AnnotationRule::new("оим отрицать", "MI", DiseaseLabel::Denied, 1).unwrap(),
            AnnotationRule::new("оим", "MI", DiseaseLabel::Present, 0).unwrap(),
        ];
        let (labeled, _) = apply_annotation_rules(&[doc], &rules, &"MI".into()).unwrap();
        assert_eq!(labeled[0].label(&"MI".into()), Some(DiseaseLabel::Present));
    }

    #[test]
    fn equal_priority_falls_back_to_file_order() {
        let doc = normalized("d", "ОИМ отрицает.");
        let rules = vec![
            AnnotationRule::new("отрицать", "MI", DiseaseLabel::Denied, 0).unwrap(),
            AnnotationRule::new("оим", "MI", DiseaseLabel::Present, 0).unwrap(),
        ];
        let (labeled, _) = apply_annotation_rules(&[doc], &rules, &"MI".into()).unwrap();
        assert_eq!(labeled[0].label(&"MI".into()), Some(DiseaseLabel::Denied));
    }

    #[test]
    fn rules_do_not_match_across_sentences() {
        let doc = normalized("d", "ОИМ. Отрицает.");
        let rules = vec![AnnotationRule::new("оим отрицать", "MI", DiseaseLabel::Denied, 0).unwrap()];
        let (_, unmatched) = apply_annotation_rules(&[doc], &rules, &"MI".into()).unwrap();
        assert_eq!(unmatched.len(), 1);
    }

    #[test]
    fn rule_application_is_idempotent() {
        let docs = vec![normalized("a", "ОИМ отрицает."), normalized("b", "ИБС. ОИМ в 2012 г.")];
        let rules = vec![
            AnnotationRule::new("оим отрицать", "MI", DiseaseLabel::Denied, 0).unwrap(),
            AnnotationRule::new("оим", "MI", DiseaseLabel::Present, 1).unwrap(),
        ];
        let (once, _) = apply_annotation_rules(&docs, &rules, &"MI".into()).unwrap();
        let (twice, _) = apply_annotation_rules(&once, &rules, &"MI".into()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn unnormalized_document_is_a_precondition_error() {
        let rules = vec![AnnotationRule::new("оим", "MI", DiseaseLabel::Present, 0).unwrap()];
        let err = apply_annotation_rules(&[Document::new("d", "ОИМ")], &rules, &"MI".into()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn parses_rule_file() {
        let rules = parse_rules("# comment\nинфаркт отрицать\tMI\t-1\t0\nоим\tMI\t1\t2\n").unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].phrase, vec!["инфаркт", "отрицать"]);
        assert_eq!(rules[1].priority, 2);
        assert!(matches!(
            parse_rules("оим\tMI\t5\t0\n"),
            Err(Error::DataFormat { line: Some(1), .. })
        ));
        assert!(parse_rules("оим\tMI\t1\n").is_err());
        assert!(parse_rules(" \tMI\t1\t0\n").is_err());
    }
}
