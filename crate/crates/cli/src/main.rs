use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use negata_core::bundle::{corpus_fingerprint, TrainingMetadata};
use negata_core::corpus::{
    apply_annotation_rules, lemmatize_rules, load_documents, load_rules, save_documents, write_documents, LabelMix,
    SyntheticConfig,
};
use negata_core::metrics::{
    render_downstream_table, render_metrics_table, run_downstream_experiment, DownstreamParams, MetricsReport,
};
use negata_core::negation::{compare_baseline, train_detector, DetectorParams};
use negata_core::trees::GbdtParams;
use negata_core::{load_model, save_model, DiseaseId, Document, Error, ModelBundle, Normalizer, TermLexicon};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_COMPAT: u8 = 3;

/// Negation detection for Russian clinical anamneses.
#[derive(Debug, Parser)]
#[command(name = "negata", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus as JSON Lines.
    GenCorpus(GenCorpusArgs),
    /// Label one disease on a corpus with phrase rules.
    Annotate(AnnotateArgs),
    /// Train a detector for one disease and save it.
    Train(TrainArgs),
    /// Classify every document with a saved detector.
    Predict(PredictArgs),
    /// Remove sentences flagged as negations.
    Clean(CleanArgs),
    /// Score saved detectors on a labeled corpus, with term-search disagreement.
    Eval(EvalArgs),
    /// Compare downstream models with and without negation detection.
    Downstream(DownstreamArgs),
}

#[derive(Debug, Args)]
struct GenCorpusArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    size: usize,
    /// Comma-separated disease codes.
    #[arg(long, value_delimiter = ',', default_value = "stroke,MI,AH,DM,AP")]
    diseases: Vec<String>,
    /// Shares of denied, absent and present labels; per-disease presets when omitted.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    mix: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// TSV of phrase, disease, label, priority.
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    disease: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    disease: String,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    rounds: usize,
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.33)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Write the metrics report as JSON here as well.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// JSON Lines output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CleanArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// One model file per disease.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    /// Term lexicon TSV; the packaged lexicon when omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DownstreamArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Target names, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "surgery")]
    task: Vec<String>,
    /// One model file per lexicon disease.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.33)]
    test_fraction: f64,
    #[arg(long, default_value_t = 10)]
    knn_k: usize,
    /// Write the table here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Compatibility(_) => EXIT_COMPAT,
        Error::DataFormat { .. }
        | Error::DuplicateId(_)
        | Error::Precondition(_)
        | Error::Training(_)
        | Error::DimensionMismatch { .. } => EXIT_DATA,
        _ => EXIT_USAGE,
    }
}

type Result<T> = negata_core::Result<T>;

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Annotate(a) => annotate(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Clean(a) => clean(a),
        Command::Eval(a) => eval(a),
        Command::Downstream(a) => downstream(a),
    }
}

fn diseases(codes: &[String]) -> Vec<DiseaseId> {
    codes.iter().map(|c| DiseaseId::new(c.trim())).collect()
}

fn load_normalized(path: &Path, normalizer: &Normalizer) -> Result<Vec<Document>> {
    Ok(normalizer.normalize_all(&load_documents(path)?))
}

/// Drops derived sentence data so output files hold only the source fields.
fn plain(docs: Vec<Document>) -> Vec<Document> {
    docs.into_iter()
        .map(|mut d| {
            d.sentences = None;
            d
        })
        .collect()
}

fn load_lexicon(path: Option<&Path>) -> Result<TermLexicon> {
    match path {
        Some(p) => TermLexicon::from_path(p),
        None => Ok(TermLexicon::packaged()),
    }
}

fn load_bundle(path: &Path, normalizer: &Normalizer) -> Result<ModelBundle> {
    let bundle = load_model(path)?;
    if let Some(warning) = bundle.lemmatizer_warning(normalizer) {
        eprintln!("warning: {warning}");
    }
    Ok(bundle)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let ds = diseases(&a.diseases);
    let config = match a.mix {
        Some(m) => {
            let mix = LabelMix::new(m[0], m[1], m[2])?;
            SyntheticConfig::uniform(a.seed, a.size, &ds, mix)
        }
        None => SyntheticConfig::with_presets(a.seed, a.size, &ds),
    };
    let docs = config.generate()?;
    save_documents(&docs, &a.out)?;
    eprintln!("wrote {} documents to {}", docs.len(), a.out.display());
    Ok(())
}

fn annotate(a: AnnotateArgs) -> Result<()> {
    let normalizer = Normalizer::from_env()?;
    let docs = load_normalized(&a.corpus, &normalizer)?;
    let rules = lemmatize_rules(&load_rules(&a.rules)?, &normalizer);
    let disease = DiseaseId::new(a.disease);
    let (labeled, unmatched) = apply_annotation_rules(&docs, &rules, &disease)?;
    save_documents(&plain(labeled), &a.out)?;
    eprintln!(
        "labeled {} of {} documents for {disease}",
        docs.len() - unmatched.len(),
        docs.len()
    );
    for id in unmatched {
        eprintln!("unmatched\t{id}");
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let normalizer = Normalizer::from_env()?;
    let docs = load_normalized(&a.corpus, &normalizer)?;
    let disease = DiseaseId::new(a.disease);
    let params = DetectorParams {
        gbdt: GbdtParams {
            rounds: a.rounds,
            max_depth: a.max_depth,
            learning_rate: a.learning_rate,
            lambda: a.lambda,
            ..GbdtParams::default()
        },
        test_fraction: a.test_fraction,
        tau: a.tau,
        ..DetectorParams::default()
    };
    let labeled: Vec<Document> = docs.into_iter().filter(|d| d.label(&disease).is_some()).collect();
    let (detector, metrics) = train_detector(&labeled, &disease, &params, a.seed)?;
    let metadata = TrainingMetadata {
        seed: a.seed,
        params,
        corpus_fingerprint: corpus_fingerprint(&labeled),
        metrics: metrics.clone(),
    };
    save_model(&ModelBundle::new(detector, &normalizer, metadata), &a.out)?;
    eprint!("{}", render_metrics_table(&[(disease, labeled.len(), metrics.clone())]));
    if let Some(path) = a.report {
        let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
        write_file(&path, &(json + "\n"))?;
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let normalizer = Normalizer::from_env()?;
    let bundle = load_bundle(&a.model, &normalizer)?;
    let detector = bundle.detector();
    let docs = load_normalized(&a.input, &normalizer)?;
    let mut lines = String::new();
    for d in &docs {
        let (label, p) = detector.classify(d, &normalizer)?;
        let row = serde_json::json!({
            "id": d.id,
            "disease": detector.disease,
            "label": label.value(),
            "probabilities": p,
        });
        lines.push_str(&row.to_string());
        lines.push('\n');
    }
    match a.out {
        Some(path) => write_file(&path, &lines),
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            match out.write_all(lines.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                }),
                _ => Ok(()),
            }
        }
    }
}

fn clean(a: CleanArgs) -> Result<()> {
    let normalizer = Normalizer::from_env()?;
    let detector = load_bundle(&a.model, &normalizer)?.detector();
    let docs = load_normalized(&a.input, &normalizer)?;
    let cleaned = docs
        .iter()
        .map(|d| detector.strip_negations(d, &normalizer))
        .collect::<Result<Vec<_>>>()?;
    let changed = docs.iter().zip(&cleaned).filter(|(a, b)| a.text != b.text).count();
    let file = File::create(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    write_documents(&plain(cleaned), BufWriter::new(file)).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    eprintln!("removed negations from {changed} of {} documents", docs.len());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let normalizer = Normalizer::from_env()?;
    let lexicon = load_lexicon(a.lexicon.as_deref())?;
    let docs = load_normalized(&a.corpus, &normalizer)?;
    let mut rows = Vec::new();
    for path in &a.models {
        let detector = load_bundle(path, &normalizer)?.detector();
        let labeled: Vec<&Document> = docs.iter().filter(|d| d.label(&detector.disease).is_some()).collect();
        if labeled.is_empty() {
            return Err(Error::Precondition(format!(
                "no document in {} is labeled for {}",
                a.corpus.display(),
                detector.disease
            )));
        }
        let truth: Vec<_> = labeled.iter().map(|d| d.label(&detector.disease).expect("filtered")).collect();
        let predicted = labeled
            .iter()
            .map(|d| detector.classify(d, &normalizer).map(|(l, _)| l))
            .collect::<Result<Vec<_>>>()?;
        let mut report = MetricsReport::from_labels(&truth, &predicted)?;
        let owned: Vec<Document> = labeled.iter().map(|&d| d.clone()).collect();
        let rates = compare_baseline(&detector, &lexicon, &owned, &normalizer)?;
        report.fp_rate = Some(rates.fp_rate);
        report.fn_rate = Some(rates.fn_rate);
        rows.push((detector.disease.clone(), labeled.len(), report));
    }
    print!("{}", render_metrics_table(&rows));
    Ok(())
}

fn downstream(a: DownstreamArgs) -> Result<()> {
    let normalizer = Normalizer::from_env()?;
    let lexicon = load_lexicon(a.lexicon.as_deref())?;
    let detectors = a
        .models
        .iter()
        .map(|p| load_bundle(p, &normalizer).map(|b| b.detector()))
        .collect::<Result<Vec<_>>>()?;
    let docs = load_normalized(&a.corpus, &normalizer)?;
    let params = DownstreamParams {
        test_fraction: a.test_fraction,
        knn_k: a.knn_k,
        ..DownstreamParams::default()
    };
    let mut results = Vec::new();
    for task in &a.task {
        results.extend(run_downstream_experiment(&docs, task, &lexicon, &detectors, &params, a.seed, &normalizer)?);
    }
    let table = render_downstream_table(&results);
    print!("{table}");
    if let Some(path) = a.out {
        write_file(&path, &table)?;
    }
    Ok(())
}
