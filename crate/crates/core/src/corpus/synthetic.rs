//! Deterministic template-based corpus generation.
//!
//! Each document receives one label per requested disease. Denied diseases are
//! rendered with denial phrases, present ones with history phrases, and absent
//! ones are either omitted or attributed to a relative. Neutral filler
//! sentences (including unrelated denials such as "Вредные привычки
//! отрицает.") keep the denial verb from being a giveaway on its own.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DiseaseId, DiseaseLabel, Document};
use crate::error::{Error, Result};

/// Proportions of the three labels for one disease.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMix {
    pub denied: f64,
    pub absent: f64,
    pub present: f64,
}

impl LabelMix {
    pub fn new(denied: f64, absent: f64, present: f64) -> Result<Self> {
        let mix = LabelMix { denied, absent, present };
        mix.validate()?;
        Ok(mix)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.denied, self.absent, self.present];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(format!("label mix has a negative share: {self:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("label mix sums to {sum}, expected 1")));
        }
        Ok(())
    }

    fn share(&self, label: DiseaseLabel) -> f64 {
        match label {
            DiseaseLabel::Denied => self.denied,
            DiseaseLabel::Absent => self.absent,
            DiseaseLabel::Present => self.present,
        }
    }

    /// Default proportions per canonical disease.
    pub fn preset(disease: &DiseaseId) -> LabelMix {
        let (d, a, p) = match disease.as_str() {
            DiseaseId::STROKE => (0.40, 0.40, 0.20),
            DiseaseId::MI => (0.30, 0.20, 0.50),
            DiseaseId::AH => (0.20, 0.20, 0.60),
            DiseaseId::DM => (0.30, 0.40, 0.30),
            DiseaseId::AP => (0.20, 0.30, 0.50),
            _ => (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
        };
        LabelMix {
            denied: d,
            absent: a,
            present: p,
        }
    }

    /// Exact label counts for `size` documents, by largest remainder.
    pub fn allocate(&self, size: usize) -> [usize; 3] {
        let exact: Vec<f64> = DiseaseLabel::ALL
            .iter()
            .map(|&l| self.share(l) * size as f64)
            .collect();
        let mut counts = [0usize; 3];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = e.floor() as usize;
        }
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let assigned: usize = counts.iter().sum();
        for &k in order.iter().take(size.saturating_sub(assigned)) {
            counts[k] += 1;
        }
        counts
    }
}

/// Placeholder kinds that may appear in a template as `{name}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotKind {
    Year,
    Age,
    Pressure,
    Duration,
    Count,
}

impl SlotKind {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "year" => SlotKind::Year,
            "age" => SlotKind::Age,
            "bp" => SlotKind::Pressure,
            "dur" => SlotKind::Duration,
            "n" => SlotKind::Count,
            _ => return None,
        })
    }

    fn fill<R: Rng>(self, rng: &mut R) -> String {
        match self {
            SlotKind::Year => rng.gen_range(2000..=2015).to_string(),
            SlotKind::Age => rng.gen_range(40..=85).to_string(),
            SlotKind::Pressure => format!(
                "{}/{}",
                rng.gen_range(14..=22) * 10,
                rng.gen_range(8..=12) * 10
            ),
            SlotKind::Duration => rng.gen_range(2..=25).to_string(),
            SlotKind::Count => rng.gen_range(1..=4).to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticTemplate {
    pub pattern: &'static str,
    pub disease: DiseaseId,
    pub label: DiseaseLabel,
    /// The sentence is about a relative, so the patient's label is 0.
    pub family: bool,
}

impl SyntheticTemplate {
    fn instantiate<R: Rng>(&self, rng: &mut R) -> String {
        let mut out = String::with_capacity(self.pattern.len() + 8);
        let mut rest = self.pattern;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let close = rest[open..].find('}').expect("template slot is closed") + open;
            let kind = SlotKind::parse(&rest[open + 1..close]).expect("known template slot");
            out.push_str(&kind.fill(rng));
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        out
    }
}

const P: DiseaseLabel = DiseaseLabel::Present;
const D: DiseaseLabel = DiseaseLabel::Denied;
const A: DiseaseLabel = DiseaseLabel::Absent;

#[rustfmt::skip]
const TEMPLATE_TABLE: &[(&str, DiseaseLabel, bool, &str)] = &[
    ("stroke", P, false, "В {year} г. перенес ОНМК по ишемическому типу."),
    ("stroke", P, false, "ОНМК в {year} году."),
    ("stroke", P, false, "Ишемический инсульт в {year} г., остаточные явления в виде слабости в правой руке."),
    ("stroke", P, false, "Перенесенный инсульт в {year} г."),
    ("stroke", P, false, "Инсульт в анамнезе с {year} г., наблюдается у невролога."),
    ("stroke", P, false, "Перенесенное ОНМК, наблюдается у невролога."),
    ("stroke", P, false, "ОНМК в {year}."),
    ("stroke", P, false, "ОНМК в анамнезе."),
    ("stroke", D, false, "ОНМК отрицает."),
    ("stroke", D, false, "Инсульты отрицает."),
    ("stroke", D, false, "ОНМК в анамнезе отрицает."),
    ("stroke", D, false, "Отрицает перенесенные инсульты."),
    ("stroke", D, false, "Инсультов не было."),
    ("stroke", D, false, "Без ОНМК в анамнезе."),
    ("stroke", A, true,  "У матери ОНМК в возрасте {age} лет."),
    ("stroke", A, true,  "Отец перенес инсульт."),

    ("MI", P, false, "ИБС. ОИМ в {year} г."),
    ("MI", P, false, "В {year} г. перенес инфаркт миокарда нижней стенки левого желудочка."),
    ("MI", P, false, "ОИМ передней стенки в {year} г., провели стентирование ПНА."),
    ("MI", P, false, "Инфаркт миокарда ранее, в {year} году."),
    ("MI", P, false, "ИБС: постинфарктный кардиосклероз, ОИМ от {year} г."),
    ("MI", P, false, "Q-образующий инфаркт миокарда в {year} г., получал анальгин, трамадол."),
    ("MI", P, false, "ИБС. ОИМ в {year}."),
    ("MI", P, false, "Перенесенный ОИМ, провели стентирование."),
    ("MI", P, false, "ИБС: постинфарктный кардиосклероз."),
    ("MI", P, false, "ОИМ в анамнезе."),
    ("MI", P, false, "Инфаркт миокарда в прошлом."),
    ("MI", P, false, "Перенесенный инфаркт миокарда."),
    ("MI", D, false, "ОИМ отрицает."),
    ("MI", D, false, "ОИМ в анамнезе отрицает."),
    ("MI", D, false, "Инфаркт миокарда в прошлом отрицает."),
    ("MI", D, false, "Инфаркт миокарда отрицает."),
    ("MI", D, false, "Инфаркт миокарда ранее отрицает."),
    ("MI", D, false, "Перенесенный инфаркт миокарда отрицает."),
    ("MI", D, false, "Отрицает перенесенный инфаркт миокарда."),
    ("MI", D, false, "Инфарктов не было."),
    ("MI", D, false, "Без инфаркта миокарда в анамнезе."),
    ("MI", A, true,  "У отца инфаркт миокарда в {age} лет."),
    ("MI", A, true,  "Мать перенесла ОИМ."),

    ("AH", P, false, "Длительное время повышение АД до {bp} мм рт. ст."),
    ("AH", P, false, "Гипертоническая болезнь в течение {dur} лет, максимальное АД {bp} мм рт. ст."),
    ("AH", P, false, "Страдает артериальной гипертензией с {year} г."),
    ("AH", P, false, "АГ более {dur} лет, адаптирован к АД {bp} мм рт. ст."),
    ("AH", P, false, "Гипертоническая болезнь, принимает эналаприл."),
    ("AH", P, false, "Повышение АД в анамнезе."),
    ("AH", D, false, "Повышения АД не было."),
    ("AH", D, false, "Без гипертонии в анамнезе."),
    ("AH", D, false, "Повышение АД отрицает."),
    ("AH", D, false, "Гипертоническую болезнь отрицает."),
    ("AH", D, false, "Артериальную гипертензию отрицает."),
    ("AH", A, true,  "У матери гипертоническая болезнь."),
    ("AH", A, true,  "Брат страдает артериальной гипертензией."),

    ("DM", P, false, "Сахарный диабет 2 типа с {year} г., принимает метформин."),
    ("DM", P, false, "СД 2 типа в течение {dur} лет."),
    ("DM", P, false, "Страдает сахарным диабетом, получает инсулинотерапию."),
    ("DM", P, false, "СД с {year}."),
    ("DM", P, false, "Сахарный диабет в анамнезе."),
    ("DM", D, false, "Сахарный диабет отрицает."),
    ("DM", D, false, "СД отрицает."),
    ("DM", D, false, "Диабет отрицает."),
    ("DM", D, false, "Сахарного диабета нет."),
    ("DM", A, true,  "У матери сахарный диабет 2 типа."),
    ("DM", A, true,  "Бабушка страдала сахарным диабетом."),

    ("AP", P, false, "Стенокардия напряжения {n} ФК с {year} г."),
    ("AP", P, false, "Давящие боли за грудиной при физической нагрузке в течение {dur} лет, купируются нитроглицерином."),
    ("AP", P, false, "ИБС: стенокардия напряжения."),
    ("AP", P, false, "Приступы стенокардии при ходьбе, принимает нитраты."),
    ("AP", P, false, "Стенокардия напряжения, купируется нитроглицерином."),
    ("AP", P, false, "Ангинозные боли ранее."),
    ("AP", D, false, "Стенокардию отрицает."),
    ("AP", D, false, "Ангинозные боли ранее отрицает."),
    ("AP", D, false, "Приступов стенокардии не было."),
    ("AP", D, false, "Отрицает боли за грудиной при нагрузке."),
    ("AP", A, true,  "У отца стенокардия."),
];

/// Short names used when several denied diseases share one sentence.
const LIST_NAMES: &[(&str, &str)] = &[
    ("stroke", "ОНМК"),
    ("MI", "ОИМ"),
    ("AH", "гипертоническую болезнь"),
    ("DM", "СД"),
    ("AP", "стенокардию"),
];

#[rustfmt::skip]
const FILLERS: &[&str] = &[
    "Доставлен бригадой СМП.",
    "Ухудшение состояния в течение {n} суток.",
    "Курит {dur} лет.",
    "Аллергологический анамнез не отягощен.",
    "С правилами внутреннего распорядка ознакомлен.",
    "Госпитализирован в стационар для обследования и лечения.",
    "Постоянно принимает аспирин, бисопролол.",
    "Вредные привычки отрицает.",
    "Травмы, операции отрицает.",
    "Ознакомлен с планом лечения.",
    "Самочувствие удовлетворительное.",
    "Направлен поликлиникой по месту жительства.",
    "Последняя госпитализация в {year} г.",
    "Курит с {year} г.",
    "Наблюдается в поликлинике с {year} года.",
    "Вредные привычки отрицает, алкоголь не употребляет.",
];

#[rustfmt::skip]
const COMPLAINTS: &[&str] = &[
    "Жалобы на давящие боли за грудиной, одышку.",
    "Жалобы на слабость, головокружение.",
    "Жалобы на интенсивные боли в груди с иррадиацией в левую руку.",
    "Жалобы на одышку при нагрузке.",
    "Жалоб нет.",
];

const PREFIXES: &[&str] = &["Со слов пациента, ", "По данным амбулаторной карты, ", "Ранее "];

/// Every template, in a fixed order.
pub fn templates() -> Vec<SyntheticTemplate> {
    TEMPLATE_TABLE
        .iter()
        .map(|&(disease, label, family, pattern)| {
            assert!(!family || label == DiseaseLabel::Absent);
            SyntheticTemplate {
                pattern,
                disease: DiseaseId::new(disease),
                label,
                family,
            }
        })
        .collect()
}

/// Generator settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub size: usize,
    pub diseases: Vec<DiseaseId>,
    pub mixes: BTreeMap<DiseaseId, LabelMix>,
    /// Chance that an absent disease is mentioned for a relative instead.
    pub family_rate: f64,
    /// Chance that two or more denied diseases share one listing sentence.
    pub joint_denial_rate: f64,
}

impl SyntheticConfig {
    /// Every disease uses `mix`.
    pub fn uniform(seed: u64, size: usize, diseases: &[DiseaseId], mix: LabelMix) -> Self {
        SyntheticConfig {
            seed,
            size,
            diseases: diseases.to_vec(),
            mixes: diseases.iter().map(|d| (d.clone(), mix)).collect(),
            family_rate: 0.3,
            joint_denial_rate: 0.4,
        }
    }

    /// Every disease uses [`LabelMix::preset`].
    pub fn with_presets(seed: u64, size: usize, diseases: &[DiseaseId]) -> Self {
        SyntheticConfig {
            mixes: diseases.iter().map(|d| (d.clone(), LabelMix::preset(d))).collect(),
            ..Self::uniform(seed, size, diseases, LabelMix::preset(&DiseaseId::new("")))
        }
    }

    pub fn generate(&self) -> Result<Vec<Document>> {
        let all = templates();
        for d in &self.diseases {
            if !all.iter().any(|t| &t.disease == d) {
                return Err(Error::UnknownDisease(d.to_string()));
            }
            self.mixes
                .get(d)
                .ok_or_else(|| Error::InvalidArgument(format!("no label mix for {d}")))?
                .validate()?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        let mut assignments: Vec<Vec<DiseaseLabel>> = Vec::with_capacity(self.diseases.len());
        for d in &self.diseases {
            let counts = self.mixes[d].allocate(self.size);
            let mut labels: Vec<DiseaseLabel> = DiseaseLabel::ALL
                .iter()
                .zip(counts)
                .flat_map(|(&l, c)| std::iter::repeat_n(l, c))
                .collect();
            labels.shuffle(&mut rng);
            assignments.push(labels);
        }

        let mut docs = Vec::with_capacity(self.size);
        for i in 0..self.size {
            let labels: BTreeMap<DiseaseId, DiseaseLabel> = self
                .diseases
                .iter()
                .zip(&assignments)
                .map(|(d, a)| (d.clone(), a[i]))
                .collect();
            let text = self.render(&all, &labels, &mut rng);
            let mut doc = Document::new(format!("syn-{}-{i:05}", self.seed), text);
            doc.labels = labels;
            attach_downstream(&mut doc, &mut rng);
            docs.push(doc);
        }
        Ok(docs)
    }

    fn render(
        &self,
        all: &[SyntheticTemplate],
        labels: &BTreeMap<DiseaseId, DiseaseLabel>,
        rng: &mut ChaCha8Rng,
    ) -> String {
        let pick = |rng: &mut ChaCha8Rng, d: &DiseaseId, label: DiseaseLabel, family: bool| {
            let options: Vec<&SyntheticTemplate> = all
                .iter()
                .filter(|t| &t.disease == d && t.label == label && t.family == family)
                .collect();
            options.choose(rng).map(|t| t.instantiate(rng))
        };

        let mut history = Vec::new();
        let denied: Vec<&DiseaseId> = labels
            .iter()
            .filter(|(_, &l)| l == DiseaseLabel::Denied)
            .map(|(d, _)| d)
            .collect();
        let listed: Vec<&DiseaseId> = if denied.len() >= 2 && rng.gen_bool(self.joint_denial_rate) {
            let mut listed = denied.clone();
            listed.shuffle(rng);
            let names: Vec<&str> = listed.iter().filter_map(|d| list_name(d)).collect();
            history.push(capitalize(&format!("{} отрицает.", names.join(", "))));
            listed
        } else {
            Vec::new()
        };

        for (d, &label) in labels {
            let sentence = match label {
                DiseaseLabel::Denied if listed.contains(&d) => None,
                DiseaseLabel::Denied => pick(rng, d, label, false).map(|s| jitter_denial(&s, rng)),
                DiseaseLabel::Present => pick(rng, d, label, false),
                DiseaseLabel::Absent if rng.gen_bool(self.family_rate) => pick(rng, d, label, true),
                DiseaseLabel::Absent => None,
            };
            history.extend(sentence);
        }
        let filler_count = rng.gen_range(1..=3);
        let fillers: Vec<&&str> = FILLERS.choose_multiple(rng, filler_count).collect();
        for f in fillers {
            history.push(SyntheticTemplate {
                pattern: f,
                disease: DiseaseId::new(""),
                label: DiseaseLabel::Absent,
                family: false,
            }
            .instantiate(rng));
        }
        history.shuffle(rng);

        let mut parts = vec![COMPLAINTS.choose(rng).expect("complaints").to_string()];
        parts.extend(history);
        parts.join(" ")
    }
}

fn list_name(d: &DiseaseId) -> Option<&'static str> {
    LIST_NAMES
        .iter()
        .find(|(code, _)| *code == d.as_str())
        .map(|(_, name)| *name)
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        // keep abbreviations such as ОИМ intact
        Some(first) if chars.clone().next().is_some_and(|c| c.is_lowercase()) => {
            first.to_lowercase().chain(chars).collect()
        }
        Some(first) => std::iter::once(first).chain(chars).collect(),
        None => String::new(),
    }
}

/// Paraphrase jitter: "X отрицает." may become "Отрицает X." or gain a
/// hedging prefix.
fn jitter_denial(sentence: &str, rng: &mut ChaCha8Rng) -> String {
    let mut s = sentence.to_string();
    if let Some(subject) = s.strip_suffix(" отрицает.") {
        if rng.gen_bool(0.3) {
            s = format!("Отрицает {}.", lower_first(subject));
        }
    }
    if rng.gen_bool(0.2) {
        let prefix = PREFIXES.choose(rng).expect("prefixes");
        s = format!("{prefix}{}", lower_first(&s));
    }
    s
}

/// Surgery follows a present MI; outcome follows stroke and diabetes. Lab
/// values track the targets more tightly than the text does.
fn attach_downstream(doc: &mut Document, rng: &mut ChaCha8Rng) {
    let has = |code: &str| doc.labels.get(&DiseaseId::new(code)) == Some(&DiseaseLabel::Present);
    let p_surgery = if doc.labels.contains_key(&DiseaseId::new(DiseaseId::MI)) {
        if has(DiseaseId::MI) {
            0.8
        } else {
            0.1
        }
    } else {
        0.3
    };
    let p_outcome = 0.15
        + if has(DiseaseId::STROKE) { 0.35 } else { 0.0 }
        + if has(DiseaseId::DM) { 0.2 } else { 0.0 };
    let surgery = rng.gen_bool(p_surgery);
    let outcome = rng.gen_bool(p_outcome);
    let dm = has(DiseaseId::DM);

    let round2 = |v: f64| (v * 100.0).round() / 100.0;
    let normal = |mean: f64, sd: f64, rng: &mut ChaCha8Rng| {
        Normal::new(mean, sd).expect("valid normal").sample(rng)
    };
    let troponin = normal(if surgery { 3.0 } else { 1.0 }, 0.8, rng).max(0.0);
    let glucose = normal(if dm { 9.0 } else { 5.5 }, 1.2, rng).max(2.0);
    let creatinine = normal(if outcome { 120.0 } else { 90.0 }, 20.0, rng).max(30.0);

    doc.targets.insert("surgery".into(), surgery as u8);
    doc.targets.insert("outcome".into(), outcome as u8);
    doc.features.insert("troponin".into(), round2(troponin));
    doc.features.insert("glucose".into(), round2(glucose));
    doc.features.insert("creatinine".into(), round2(creatinine));
}

/// Generates `size` documents with `mix` applied to every disease.
pub fn generate_synthetic_corpus(
    seed: u64,
    size: i64,
    diseases: &[DiseaseId],
    mix: LabelMix,
) -> Result<Vec<Document>> {
    let size = usize::try_from(size)
        .map_err(|_| Error::InvalidArgument(format!("corpus size must be non-negative, got {size}")))?;
    mix.validate()?;
    SyntheticConfig::uniform(seed, size, diseases, mix).generate()
}
