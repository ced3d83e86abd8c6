use proptest::collection::{btree_map, vec};
use proptest::prelude::*;

use negata_core::corpus::{read_documents, write_documents};
use negata_core::metrics::{confusion_matrix, f1_scores, stratified_split};
use negata_core::textnorm::tokenize;
use negata_core::trees::{decompose_prediction, fit_gbdt, GbdtParams, Objective};
use negata_core::vectorizer::{TfIdfModel, VectorizerParams};
use negata_core::{DiseaseId, DiseaseLabel, Document, Normalizer, SparseVector};

const WORDS: &[&str] = &[
    "ОИМ", "отрицает", "инфаркт", "миокарда", "в", "2012", "г", "ИБС", "Жалоб", "нет", "АД", "140/90", "мм", "рт",
    "ст", "стент-графт", "сахарный", "диабет", "2", "типа", "инсульты", "не", "было", "у", "отца",
];
const PUNCT: &[&str] = &[" ", " ", " ", ". ", ", ", "! ", "\n", ".", "  "];

fn clinical_text() -> impl Strategy<Value = String> {
    vec((0..WORDS.len(), 0..PUNCT.len()), 0..25).prop_map(|parts| {
        parts
            .into_iter()
            .map(|(w, p)| format!("{}{}", WORDS[w], PUNCT[p]))
            .collect()
    })
}

fn label() -> impl Strategy<Value = DiseaseLabel> {
    prop_oneof![Just(DiseaseLabel::Denied), Just(DiseaseLabel::Absent), Just(DiseaseLabel::Present)]
}

fn document() -> impl Strategy<Value = Document> {
    (
        "[a-z0-9-]{1,12}",
        clinical_text(),
        btree_map(prop_oneof![Just("MI"), Just("AH"), Just("stroke")], label(), 0..3),
        btree_map("[a-z]{1,8}", 0u8..=1, 0..2),
        btree_map("[a-z]{1,8}", -1e6f64..1e6, 0..3),
    )
        .prop_map(|(id, text, labels, targets, features)| {
            let mut doc = Document::new(id, text);
            doc.labels = labels.into_iter().map(|(d, l)| (DiseaseId::new(d), l)).collect();
            doc.targets = targets;
            doc.features = features;
            doc
        })
}

fn sparse_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..20).prop_flat_map(|n| {
        let cell = prop_oneof![Just(0.0), -10.0f64..10.0];
        (vec(cell.clone(), n), vec(cell, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jsonl_round_trip(docs in vec(document(), 0..8)) {
        let mut docs = docs;
        for (i, d) in docs.iter_mut().enumerate() {
            d.id = format!("{i}-{}", d.id);
        }
        let mut buf = Vec::new();
        write_documents(&docs, &mut buf).unwrap();
        let back = read_documents(buf.as_slice()).unwrap();
        prop_assert_eq!(back, docs);
    }

    #[test]
    fn tokens_are_ordered_lowercased_substrings(text in clinical_text()) {
        let tokens = tokenize(&text);
        let mut last_end = 0;
        for t in &tokens {
            prop_assert!(t.span.start >= last_end);
            prop_assert_eq!(&text[t.span.range()].to_lowercase(), &t.text);
            prop_assert!(t.text.chars().all(|c| c.is_alphanumeric() || c == '-'));
            last_end = t.span.end;
        }
        let covered: usize = tokens.iter().map(|t| t.span.len()).sum();
        let alnum: usize = text.chars().filter(|c| c.is_alphanumeric()).map(char::len_utf8).sum();
        let hyphens: usize = tokens.iter().map(|t| t.text.matches('-').count()).sum();
        prop_assert_eq!(covered, alnum + hyphens);
    }

    #[test]
    fn sentences_cover_all_non_whitespace(text in clinical_text()) {
        let n = Normalizer::default();
        let spans = n.split_sentences(&text);
        let mut last_end = 0;
        for s in &spans {
            prop_assert!(s.start >= last_end && s.start < s.end);
            prop_assert!(!text[s.start..s.end].starts_with(char::is_whitespace));
            prop_assert!(!text[s.start..s.end].ends_with(char::is_whitespace));
            prop_assert!(text[last_end..s.start].trim().is_empty());
            last_end = s.end;
        }
        prop_assert!(text[last_end..].trim().is_empty());
    }

    #[test]
    fn sentence_tokens_stay_inside_sentences(text in clinical_text()) {
        let n = Normalizer::default();
        for s in n.sentences(&text) {
            prop_assert!(!s.tokens.is_empty());
            for t in &s.tokens {
                prop_assert!(t.span.start >= s.span.start && t.span.end <= s.span.end);
                prop_assert_eq!(&text[t.span.range()], t.surface.as_str());
            }
        }
    }

    #[test]
    fn lemmatization_is_idempotent(word in "[а-яё]{1,14}") {
        let n = Normalizer::default();
        let once = n.lemmatize(&word);
        prop_assert!(!once.is_empty());
        prop_assert_eq!(n.lemmatize(&once), once);
    }

    #[test]
    fn tfidf_vectors_are_unit_or_zero(texts in vec(clinical_text(), 1..6), probe in clinical_text()) {
        let n = Normalizer::default();
        let docs: Vec<Document> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| n.normalize_document(&Document::new(i.to_string(), t.clone())))
            .collect();
        let model = TfIdfModel::fit(&docs, VectorizerParams::default()).unwrap();
        let probe = n.normalize_document(&Document::new("p", probe));
        for d in docs.iter().chain([&probe]) {
            let v = model.transform(d).unwrap();
            prop_assert_eq!(v.dim(), model.dim());
            prop_assert!(v.is_zero() || (v.norm() - 1.0).abs() < 1e-12);
            prop_assert!(v.iter().all(|(_, w)| w > 0.0));
        }
    }

    #[test]
    fn sparse_matches_dense((a, b) in sparse_pair()) {
        let (sa, sb) = (SparseVector::from_dense(&a), SparseVector::from_dense(&b));
        prop_assert_eq!(sa.to_dense(), a.clone());
        for (i, v) in a.iter().enumerate() {
            prop_assert_eq!(sa.get(i), *v);
        }
        let dense_dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        prop_assert!((sa.squared_distance(&sb) - dense_dist).abs() <= 1e-9 * (1.0 + dense_dist));
        let dense_norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((sa.norm() - dense_norm).abs() <= 1e-12 * (1.0 + dense_norm));
        let cat = sa.concat(&sb);
        prop_assert_eq!(cat.to_dense(), [a, b].concat());
    }

    #[test]
    fn decomposition_is_additive(
        rows in vec(vec(prop_oneof![Just(0.0), 0.0f64..3.0], 4), 6..30),
        seed in 0u64..1000,
    ) {
        let y: Vec<usize> = rows.iter().enumerate().map(|(i, r)| usize::from(r[0] + r[1] > 1.5) ^ (i % 7 == 0) as usize).collect();
        let x: Vec<SparseVector> = rows.iter().map(|r| SparseVector::from_dense(r)).collect();
        let params = GbdtParams { rounds: 8, max_depth: 3, objective: Objective::Softmax, seed, ..GbdtParams::default() };
        let model = fit_gbdt(&x, &y, 3, &params).unwrap();
        for row in &x {
            for k in 0..3 {
                let d = decompose_prediction(&model, row, k).unwrap();
                prop_assert!((d.total() - model.raw_score(row, k).unwrap()).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn stratified_split_is_balanced_and_exhaustive(
        counts in vec(2usize..40, 1..5),
        fraction in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let (train, test) = stratified_split(&labels, fraction, seed).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for (c, &n) in counts.iter().enumerate() {
            let in_test = test.iter().filter(|&&i| labels[i] == c).count() as f64;
            prop_assert!((in_test - fraction * n as f64).abs() <= 1.0);
            prop_assert!(in_test >= 1.0 && in_test < n as f64);
        }
        prop_assert_eq!(stratified_split(&labels, fraction, seed).unwrap(), (train, test));
    }

    #[test]
    fn macro_f1_is_mean_of_per_class(pairs in vec((0usize..3, 0usize..3), 1..60)) {
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let cm = confusion_matrix(&truth, &pred, &[0, 1, 2]).unwrap();
        prop_assert_eq!(cm.total(), truth.len());
        let s = f1_scores(&cm);
        let mean = s.per_class.iter().sum::<f64>() / 3.0;
        prop_assert!((s.macro_f1 - mean).abs() < 1e-15);
        prop_assert!(s.per_class.iter().all(|f| (0.0..=1.0).contains(f)));
        prop_assert!((0.0..=1.0).contains(&s.accuracy));
    }
}
