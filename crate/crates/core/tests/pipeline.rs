use std::sync::OnceLock;

use negata_core::bundle::{corpus_fingerprint, load_model, save_model, ModelBundle, TrainingMetadata};
use negata_core::corpus::{LabelMix, SyntheticConfig};
use negata_core::metrics::{
    extract_diagnosis_features, run_downstream_experiment, stratified_split, DownstreamParams, MetricsReport, NdMode,
};
use negata_core::negation::{
    compare_baseline, term_search_label, train_detector, DetectorParams, NegationDetector, TermLexicon,
};
use negata_core::trees::{ForestParams, GbdtParams};
use negata_core::{DiseaseId, DiseaseLabel, Document, Error, Normalizer};

fn mi() -> DiseaseId {
    DiseaseId::new("MI")
}

fn normalizer() -> &'static Normalizer {
    static N: OnceLock<Normalizer> = OnceLock::new();
    N.get_or_init(Normalizer::default)
}

fn corpus() -> &'static Vec<Document> {
    static C: OnceLock<Vec<Document>> = OnceLock::new();
    C.get_or_init(|| {
        let docs = SyntheticConfig::with_presets(42, 600, &DiseaseId::canonical())
            .generate()
            .unwrap();
        normalizer().normalize_all(&docs)
    })
}

fn trained() -> &'static (NegationDetector, MetricsReport) {
    static D: OnceLock<(NegationDetector, MetricsReport)> = OnceLock::new();
    D.get_or_init(|| train_detector(corpus(), &mi(), &DetectorParams::default(), 42).unwrap())
}

fn detector() -> &'static NegationDetector {
    &trained().0
}

fn doc(text: &str) -> Document {
    normalizer().normalize_document(&Document::new("t", text))
}

fn fast_params() -> DetectorParams {
    DetectorParams {
        gbdt: GbdtParams {
            rounds: 30,
            ..GbdtParams::default()
        },
        ..DetectorParams::default()
    }
}

#[test]
fn detector_meets_quality_bar() {
    let (det, report) = trained();
    assert_eq!(det.class_count(), 3);
    assert!(report.macro_f1 >= 0.85, "{report:?}");
    let mean = report.per_class_f1.iter().sum::<f64>() / 3.0;
    assert!((report.macro_f1 - mean).abs() < 1e-15);
    assert_eq!(report.n_samples, 198);
}

#[test]
fn same_seed_same_detector() {
    let docs = &corpus()[..200];
    let a = train_detector(docs, &mi(), &fast_params(), 5).unwrap();
    let b = train_detector(docs, &mi(), &fast_params(), 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_label_class_is_a_training_error() {
    let docs: Vec<Document> = corpus()
        .iter()
        .filter(|d| d.label(&mi()) != Some(DiseaseLabel::Absent))
        .cloned()
        .collect();
    match train_detector(&docs, &mi(), &fast_params(), 1) {
        Err(Error::Training(msg)) => assert!(msg.contains("label 0"), "{msg}"),
        other => panic!("expected training error, got {other:?}"),
    }
}

#[test]
fn unlabeled_or_unnormalized_documents_are_rejected() {
    let mut docs = corpus()[..50].to_vec();
    docs[3].labels.clear();
    assert!(matches!(
        train_detector(&docs, &mi(), &fast_params(), 1),
        Err(Error::Precondition(_))
    ));
    let mut docs = corpus()[..50].to_vec();
    docs[3].sentences = None;
    assert!(matches!(
        train_detector(&docs, &mi(), &fast_params(), 1),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn classifies_reference_sentences() {
    let det = detector();
    let n = normalizer();
    assert_eq!(det.classify(&Document::new("a", "ОИМ отрицает."), n).unwrap().0, DiseaseLabel::Denied);
    assert_eq!(det.classify(&Document::new("b", "ИБС. ОИМ в 2012."), n).unwrap().0, DiseaseLabel::Present);
    let (label, p) = det.classify(&Document::new("c", ""), n).unwrap();
    assert_eq!(label, DiseaseLabel::Absent);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn term_search_cannot_see_negation() {
    let lex = TermLexicon::packaged();
    assert_eq!(term_search_label(&lex, &doc("ОИМ отрицает."), &mi()).unwrap(), DiseaseLabel::Present);
    assert_eq!(term_search_label(&lex, &doc("Жалоб нет."), &mi()).unwrap(), DiseaseLabel::Absent);
    assert!(matches!(
        term_search_label(&lex, &doc("Жалоб нет."), &DiseaseId::new("flu")),
        Err(Error::UnknownDisease(_))
    ));
}

#[test]
fn attribution_covers_every_sentence_and_conserves_mass() {
    let det = detector();
    for d in corpus().iter().take(120) {
        let report = det.attribute_sentences(d, normalizer()).unwrap();
        let sentences = d.normalized_sentences().unwrap();
        assert_eq!(report.sentences.len(), sentences.len());
        for (a, s) in report.sentences.iter().zip(sentences) {
            assert_eq!(a.span, s.span);
            assert_eq!(a.flagged, a.score > det.tau && report.label == DiseaseLabel::Denied);
        }
        let x = det.tfidf.transform(d).unwrap();
        let dec = negata_core::trees::decompose_prediction(&det.classifier, &x, 0).unwrap();
        let total: f64 = dec.contributions.iter().sum();
        let present: f64 = dec
            .contributions
            .iter()
            .enumerate()
            .filter(|(i, _)| x.get(*i) != 0.0)
            .map(|(_, c)| c)
            .sum();
        let scores: f64 = report.sentences.iter().map(|s| s.score).sum();
        assert!((scores - present).abs() < 1e-9);
        assert!((scores + report.residual - total).abs() < 1e-9);
        assert!((report.base - dec.base).abs() < 1e-15);
    }
}

#[test]
fn denial_sentence_outscores_neutral_sentence() {
    let report = detector()
        .attribute_sentences(&doc("Жалоб нет. ОИМ отрицает."), normalizer())
        .unwrap();
    assert_eq!(report.label, DiseaseLabel::Denied);
    assert!(report.sentences[1].score > report.sentences[0].score, "{report:?}");
    assert!(report.sentences[1].flagged);
}

#[test]
fn present_documents_flag_nothing() {
    let report = detector()
        .attribute_sentences(&doc("ИБС. ОИМ в 2012 г. Курит 10 лет."), normalizer())
        .unwrap();
    assert_eq!(report.label, DiseaseLabel::Present);
    assert!(report.sentences.iter().all(|s| !s.flagged));
}

#[test]
fn strip_removes_flagged_sentences_only() {
    let mut det = detector().clone();
    det.tau = 0.5;
    let stripped = det
        .strip_negations(&doc("ОИМ отрицает. Жалоб нет."), normalizer())
        .unwrap();
    assert_eq!(stripped.text, "Жалоб нет.");
    assert!(stripped.is_normalized());

    let clean = doc("ИБС. ОИМ в 2012 г.");
    assert_eq!(det.strip_negations(&clean, normalizer()).unwrap(), clean);

    let all = det.strip_negations(&doc("ОИМ отрицает."), normalizer()).unwrap();
    assert_eq!(all.text, "");
}

#[test]
fn strip_is_idempotent_and_monotone() {
    let det = detector();
    let lex = TermLexicon::packaged();
    let mut changed = 0;
    for d in corpus().iter().take(150) {
        let once = det.strip_negations(d, normalizer()).unwrap();
        let twice = det.strip_negations(&once, normalizer()).unwrap();
        assert_eq!(once, twice);
        if once.text != d.text {
            changed += 1;
        }
        for s in once.normalized_sentences().unwrap() {
            assert!(d.text.contains(&once.text[s.span.range()]));
        }
        let before = term_search_label(&lex, d, &mi()).unwrap();
        let after = term_search_label(&lex, &once, &mi()).unwrap();
        assert!(!(before == DiseaseLabel::Absent && after == DiseaseLabel::Present));
    }
    assert!(changed > 0);
}

#[test]
fn disagreement_rates_on_corpus() {
    let det = detector();
    let lex = TermLexicon::packaged();
    let rates = compare_baseline(det, &lex, &corpus()[..200], normalizer()).unwrap();
    assert!(rates.fp_rate > 0.0 && rates.fp_rate < 1.0);
    assert!((0.0..=1.0).contains(&rates.fn_rate));
    assert!(compare_baseline(det, &lex, &[], normalizer()).is_err());
}

#[test]
fn diagnosis_features_follow_nd_mode() {
    let det = detector().clone();
    let lex = TermLexicon::parse("MI\tоим\nMI\tинфаркт миокард\n").unwrap();
    let dets = [det];
    let denied = doc("ОИМ отрицает.");
    let present = doc("ОИМ в 2012 г.");
    let none = doc("Жалоб нет.");
    let f = |d: &Document, nd| extract_diagnosis_features(d, &lex, Some(&dets), nd, normalizer()).unwrap();
    assert_eq!(f(&denied, NdMode::Without), vec![1.0]);
    assert_eq!(f(&denied, NdMode::With), vec![0.0]);
    assert_eq!(f(&present, NdMode::Without), vec![1.0]);
    assert_eq!(f(&present, NdMode::With), vec![1.0]);
    assert_eq!(f(&none, NdMode::Without), vec![0.0]);
    assert_eq!(f(&none, NdMode::With), vec![0.0]);
    assert!(matches!(
        extract_diagnosis_features(&denied, &lex, None, NdMode::With, normalizer()),
        Err(Error::Precondition(_))
    ));
}

fn light_downstream() -> DownstreamParams {
    DownstreamParams {
        gbdt: GbdtParams {
            rounds: 40,
            ..GbdtParams::downstream()
        },
        forest: ForestParams {
            n_trees: 40,
            ..ForestParams::default()
        },
        ..DownstreamParams::default()
    }
}

#[test]
fn nd_has_no_effect_without_negations_or_confounders() {
    let mut config = SyntheticConfig::uniform(9, 240, &[mi()], LabelMix::new(0.0, 0.5, 0.5).unwrap());
    config.family_rate = 0.0;
    let lex = TermLexicon::parse("MI\tоим\nMI\tинфаркт миокард\nMI\tинфаркт\n").unwrap();
    let dets = [detector().clone()];
    let docs: Vec<Document> = normalizer()
        .normalize_all(&config.generate().unwrap())
        .into_iter()
        .filter(|d| dets[0].attribute_sentences(d, normalizer()).unwrap().flagged().next().is_none())
        .collect();
    assert!(docs.len() > 200);
    let results = run_downstream_experiment(&docs, "surgery", &lex, &dets, &light_downstream(), 3, normalizer()).unwrap();
    assert_eq!(results.len(), 12);
    for with in results.iter().filter(|r| r.nd == NdMode::With) {
        let without = results
            .iter()
            .find(|r| r.nd == NdMode::Without && r.family == with.family && r.features == with.features)
            .unwrap();
        assert_eq!(with.f1, without.f1, "{with:?} vs {without:?}");
    }
}

#[test]
fn features_agree_on_documents_without_flags() {
    let lex = TermLexicon::packaged();
    let dets: Vec<NegationDetector> = DiseaseId::canonical()
        .iter()
        .map(|d| train_detector(corpus(), d, &fast_params(), 42).unwrap().0)
        .collect();
    let mut unflagged = 0;
    for d in corpus().iter().take(150) {
        let flagged = dets
            .iter()
            .any(|det| det.attribute_sentences(d, normalizer()).unwrap().flagged().next().is_some());
        let without = extract_diagnosis_features(d, &lex, Some(&dets), NdMode::Without, normalizer()).unwrap();
        let with = extract_diagnosis_features(d, &lex, Some(&dets), NdMode::With, normalizer()).unwrap();
        if !flagged {
            unflagged += 1;
            assert_eq!(with, without);
        }
        for (w, wo) in with.iter().zip(&without) {
            assert!(w <= wo);
        }
    }
    assert!(unflagged > 0);
}

#[test]
fn downstream_is_deterministic_and_needs_targets() {
    let lex = TermLexicon::parse("MI\tоим\nMI\tинфаркт миокард\n").unwrap();
    let dets = [detector().clone()];
    let docs = &corpus()[..240];
    let a = run_downstream_experiment(docs, "surgery", &lex, &dets, &light_downstream(), 4, normalizer()).unwrap();
    let b = run_downstream_experiment(docs, "surgery", &lex, &dets, &light_downstream(), 4, normalizer()).unwrap();
    assert_eq!(a, b);
    let mut missing = docs.to_vec();
    missing[0].targets.clear();
    assert!(run_downstream_experiment(&missing, "surgery", &lex, &dets, &light_downstream(), 4, normalizer()).is_err());
}

fn bundle() -> ModelBundle {
    let (det, report) = trained().clone();
    let metadata = TrainingMetadata {
        seed: 42,
        params: DetectorParams::default(),
        corpus_fingerprint: corpus_fingerprint(corpus()),
        metrics: report,
    };
    ModelBundle::new(det, normalizer(), metadata)
}

#[test]
fn model_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mi.model.json");
    let original = bundle();
    save_model(&original, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, original);
    assert!(loaded.lemmatizer_warning(normalizer()).is_none());

    let det = loaded.detector();
    for d in corpus().iter().take(100) {
        let a = detector().classify(d, normalizer()).unwrap();
        let b = det.classify(d, normalizer()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.map(f64::to_bits), b.1.map(f64::to_bits));
    }
}

#[test]
fn reloaded_model_reproduces_test_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mi.model.json");
    save_model(&bundle(), &path).unwrap();
    let loaded = load_model(&path).unwrap();
    let det = loaded.detector();
    let docs = corpus();
    let classes: Vec<usize> = docs.iter().map(|d| d.label(&mi()).unwrap().class_index()).collect();
    let (_, test) = stratified_split(&classes, 0.33, 42).unwrap();
    let truth: Vec<DiseaseLabel> = test.iter().map(|&i| docs[i].label(&mi()).unwrap()).collect();
    let predicted: Vec<DiseaseLabel> = test
        .iter()
        .map(|&i| det.classify(&docs[i], normalizer()).unwrap().0)
        .collect();
    let report = MetricsReport::from_labels(&truth, &predicted).unwrap();
    assert_eq!(report, loaded.metadata.metrics);
}

#[test]
fn damaged_model_files_are_rejected() {
    let json = bundle().to_json().unwrap();
    let truncated = &json[..json.len() / 3];
    assert!(matches!(ModelBundle::from_json(truncated), Err(Error::DataFormat { .. })));
    let future = json.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    assert!(matches!(ModelBundle::from_json(&future), Err(Error::Compatibility(_))));
    let unversioned = json.replacen("\"format_version\": 1,", "", 1);
    assert!(matches!(ModelBundle::from_json(&unversioned), Err(Error::DataFormat { .. })));
}

#[test]
fn lemma_table_mismatch_only_warns() {
    let mut b = bundle();
    b.lemma_checksum = "0".repeat(64);
    let reloaded = ModelBundle::from_json(&b.to_json().unwrap()).unwrap();
    let warning = reloaded.lemmatizer_warning(normalizer()).unwrap();
    assert!(warning.contains("lemma table"));
}
