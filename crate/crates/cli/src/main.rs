use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bisent2vec::classifier::{
    evaluate_classifier, read_documents_file, train_classifier, ClassifierOptions,
};
use bisent2vec::eval::{
    render_table, sentence_retrieval_p1, word_similarity_eval, word_translation_p1,
    BilingualDictionary, Criterion, IdfTable, MetricRecord, RetrievalOptions, SimilarityDataset,
    DEFAULT_CANDIDATES, DEFAULT_CSLS_K, DEFAULT_SR_QUERIES, DEFAULT_WT_QUERIES,
};
use bisent2vec::trainer::train;
use bisent2vec::{LanguageId, Mlp, Model, NgramConfig, TrainConfig, VectorSource};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "bisent2vec",
    version,
    about = "Train joint bilingual word/sentence embeddings and evaluate them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a sentence-aligned corpus.
    Train(TrainArgs),
    /// Word translation precision at 1 against a bilingual dictionary.
    EvalWt(EvalWtArgs),
    /// Sentence retrieval precision at 1 on aligned sentence files.
    EvalSr(EvalSrArgs),
    /// Pearson correlation with human word similarity scores.
    EvalWs(EvalWsArgs),
    /// Fit a document classifier on one language.
    ClassifyTrain(ClassifyTrainArgs),
    /// Accuracy of a trained classifier, possibly on the other language.
    ClassifyEval(ClassifyEvalArgs),
    /// Write per-language word vectors as text.
    Export(ExportArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// First-language side of the corpus, one tokenized sentence per line.
    #[arg(long)]
    l1: Option<PathBuf>,
    /// Second-language side, line-aligned with --l1.
    #[arg(long)]
    l2: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    negatives: Option<usize>,
    /// Highest n-gram order: 1 (unigrams) or 2 (adds hashed bigrams).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    ngrams: Option<u8>,
    #[arg(long)]
    buckets: Option<usize>,
    #[arg(long)]
    dropout_k: Option<usize>,
    #[arg(long)]
    min_count: Option<u64>,
    /// Subsampling threshold.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train on the first N pairs only.
    #[arg(long)]
    max_pairs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with defaults; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Nn,
    Csls,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Nn => Criterion::Nn,
            CriterionArg::Csls => Criterion::Csls,
        }
    }
}

fn criteria(c: Option<CriterionArg>) -> Vec<Criterion> {
    match c {
        Some(c) => vec![c.into()],
        None => vec![Criterion::Nn, Criterion::Csls],
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LangArg {
    L1,
    L2,
}

impl From<LangArg> for LanguageId {
    fn from(l: LangArg) -> Self {
        match l {
            LangArg::L1 => LanguageId::L1,
            LangArg::L2 => LanguageId::L2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Input,
    Output,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON-lines report file (printed after the table when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalWtArgs {
    #[arg(long)]
    model: PathBuf,
    /// "source target" pairs, first language on the left.
    #[arg(long)]
    dict: PathBuf,
    /// Retrieval criterion; both when omitted.
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    #[arg(long, default_value_t = DEFAULT_CSLS_K)]
    csls_k: usize,
    #[arg(long, default_value_t = DEFAULT_WT_QUERIES)]
    queries: usize,
    #[arg(long, default_value_t = DEFAULT_CANDIDATES)]
    candidates: usize,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct EvalSrArgs {
    #[arg(long)]
    model: PathBuf,
    /// First-language test sentences.
    #[arg(long)]
    l1: PathBuf,
    /// Their translations, line by line.
    #[arg(long)]
    l2: PathBuf,
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    #[arg(long, default_value_t = DEFAULT_CSLS_K)]
    csls_k: usize,
    #[arg(long, default_value_t = DEFAULT_SR_QUERIES)]
    queries: usize,
    #[arg(long, default_value_t = DEFAULT_CANDIDATES)]
    candidates: usize,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct EvalWsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "l1")]
    lang: LangArg,
    /// "w1 w2 score" files.
    #[arg(required = true)]
    datasets: Vec<PathBuf>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct ClassifyTrainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labelled documents: blank-line separated blocks, label on the first line.
    #[arg(long)]
    docs: PathBuf,
    #[arg(long, value_enum, default_value = "l1")]
    lang: LangArg,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Classifier file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyEvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    classifier: PathBuf,
    #[arg(long)]
    docs: PathBuf,
    #[arg(long, value_enum, default_value = "l2")]
    lang: LangArg,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "input")]
    source: SourceArg,
}

/// Bad invocation discovered after argument parsing.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Everything a training run depends on; written next to the model.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    l1: Option<PathBuf>,
    l2: Option<PathBuf>,
    #[serde(default)]
    train: TrainConfig,
}

fn resolve(args: &TrainArgs) -> Result<RunConfig> {
    let mut rc = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str::<RunConfig>(&text)
                .map_err(|e| usage(format!("config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if args.l1.is_some() {
        rc.l1 = args.l1.clone();
    }
    if args.l2.is_some() {
        rc.l2 = args.l2.clone();
    }
    let cfg = &mut rc.train;
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field {
                cfg.$field = v;
            }
        )*};
    }
    set!(dim, epochs, lr, negatives, min_count, t, threads, seed);
    if args.max_pairs.is_some() {
        cfg.max_pairs = args.max_pairs;
    }
    if let Some(n) = args.ngrams {
        if n != cfg.ngrams.max_n {
            // switching order picks up that order's dropout default
            let buckets = cfg.ngrams.buckets;
            cfg.ngrams = if n == 1 {
                NgramConfig::unigrams()
            } else {
                NgramConfig::bigrams()
            };
            cfg.ngrams.buckets = buckets;
        }
    }
    if let Some(b) = args.buckets {
        cfg.ngrams.buckets = b;
    }
    if let Some(k) = args.dropout_k {
        cfg.ngrams.dropout_k = k;
    }
    if rc.l1.is_none() || rc.l2.is_none() {
        return Err(usage("both --l1 and --l2 are required (flag or config file)"));
    }
    rc.train.validate().map_err(|e| usage(e.to_string()))?;
    Ok(rc)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut rc = resolve(&args)?;
    let (l1, l2) = (rc.l1.clone().unwrap(), rc.l2.clone().unwrap());
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;

    // absolute corpus paths so the snapshot works from any directory
    rc.l1 = Some(fs::canonicalize(&l1).with_context(|| format!("corpus {}", l1.display()))?);
    rc.l2 = Some(fs::canonicalize(&l2).with_context(|| format!("corpus {}", l2.display()))?);
    let snapshot = toml::to_string(&rc).context("serializing resolved config")?;
    fs::write(args.out.join("config.toml"), snapshot)?;

    info!("training on {} / {}", l1.display(), l2.display());
    let out = train::<f32>(&l1, &l2, &rc.train)?;
    let model_path = args.out.join("model.bin");
    out.model.save(&model_path)?;
    for lang in LanguageId::BOTH {
        out.model.export_text(
            lang,
            VectorSource::Input,
            args.out.join(format!("vectors.{lang}.txt")),
        )?;
    }

    let r = &out.report;
    let mut log = String::new();
    log.push_str(&format!(
        "pairs per epoch {}\nskipped pairs {}\ntargets {}\nupdates {}\n",
        r.pairs_per_epoch, r.skipped_pairs, r.targets, r.updates
    ));
    for (i, loss) in r.epoch_losses.iter().enumerate() {
        log.push_str(&format!("epoch {} loss {loss:.6}\n", i + 1));
    }
    fs::write(args.out.join("train.log"), &log)?;
    print!("{log}");
    println!(
        "vocabulary {} + {} words, model written to {}",
        out.model.vocab.n_words_of(LanguageId::L1),
        out.model.vocab.n_words_of(LanguageId::L2),
        model_path.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn emit(records: &[MetricRecord], report: &ReportArgs) -> Result<()> {
    print!("{}", render_table(records));
    let lines: String = records.iter().map(|r| r.to_json() + "\n").collect();
    match &report.out {
        Some(path) => fs::write(path, lines)
            .with_context(|| format!("writing report {}", path.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(lines.as_bytes())?;
        }
    }
    Ok(())
}

fn cmd_eval_wt(args: EvalWtArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let dict = BilingualDictionary::read_file(&args.dict)?;
    let v1 = model.word_vectors(LanguageId::L1, VectorSource::Input);
    let v2 = model.word_vectors(LanguageId::L2, VectorSource::Input);
    let mut records = Vec::new();
    let directions = [("l1-l2", &v1, &v2, dict.clone()), ("l2-l1", &v2, &v1, dict.reversed())];
    for (name, src, tgt, d) in directions {
        for c in criteria(args.criterion) {
            let r = word_translation_p1(src, tgt, &d, c, args.csls_k, args.queries, args.candidates)?;
            records.push(MetricRecord::new(
                "word-translation-p@1",
                name,
                c.to_string(),
                r.p_at_1,
                r.coverage(),
            ));
        }
    }
    emit(&records, &args.report)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn cmd_eval_sr(args: EvalSrArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let s1 = read_lines(&args.l1)?;
    let s2 = read_lines(&args.l2)?;
    let idf1 = IdfTable::build(&s1)?;
    let idf2 = IdfTable::build(&s2)?;
    let v1 = model.word_vectors(LanguageId::L1, VectorSource::Input);
    let v2 = model.word_vectors(LanguageId::L2, VectorSource::Input);
    let mut records = Vec::new();
    for c in criteria(args.criterion) {
        let opts = RetrievalOptions {
            criterion: c,
            csls_k: args.csls_k,
            max_queries: args.queries,
            max_candidates: args.candidates,
        };
        let r = sentence_retrieval_p1(&s1, &s2, &v1, &v2, &idf1, &idf2, &opts)?;
        let coverage = r.candidates as f64 / (r.candidates + r.excluded) as f64;
        records.push(MetricRecord::new("sentence-retrieval-p@1", "l1-l2", c.to_string(), r.forward.p_at_1, coverage));
        records.push(MetricRecord::new("sentence-retrieval-p@1", "l2-l1", c.to_string(), r.backward.p_at_1, coverage));
    }
    emit(&records, &args.report)
}

fn cmd_eval_ws(args: EvalWsArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let lang: LanguageId = args.lang.into();
    let vectors = model.word_vectors(lang, VectorSource::Input);
    let mut records = Vec::new();
    for path in &args.datasets {
        let ds = SimilarityDataset::read_file(path)?;
        let r = word_similarity_eval(&vectors, &ds)
            .with_context(|| format!("dataset {}", path.display()))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        records.push(MetricRecord::new(
            format!("word-similarity:{name}"),
            lang.to_string(),
            "pearson",
            r.pearson,
            r.coverage(),
        ));
    }
    emit(&records, &args.report)
}

fn cmd_classify_train(args: ClassifyTrainArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let lang: LanguageId = args.lang.into();
    let docs = read_documents_file(&args.docs)?;
    let opts = ClassifierOptions {
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        ..ClassifierOptions::default()
    };
    let (params, fit) = train_classifier(&docs, &model, lang, &opts)?;
    params.save(&args.out)?;
    let acc = evaluate_classifier(&params, &docs, &model, lang)?;
    println!(
        "trained {} epochs on {} documents, final loss {:.4}",
        fit.epoch_losses.len(),
        docs.len(),
        fit.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    println!("training accuracy {:.4}", acc.accuracy);
    Ok(())
}

fn cmd_classify_eval(args: ClassifyEvalArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let params = Mlp::load(&args.classifier)?;
    let lang: LanguageId = args.lang.into();
    let docs = read_documents_file(&args.docs)?;
    let r = evaluate_classifier(&params, &docs, &model, lang)?;
    let coverage = (r.documents - r.oov_documents) as f64 / r.documents as f64;
    println!("accuracy {:.4}", r.accuracy);
    emit(
        &[MetricRecord::new("classification-accuracy", lang.to_string(), "mlp", r.accuracy, coverage)],
        &args.report,
    )
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let source = match args.source {
        SourceArg::Input => VectorSource::Input,
        SourceArg::Output => VectorSource::Output,
    };
    fs::create_dir_all(&args.out)?;
    for lang in LanguageId::BOTH {
        let path = args.out.join(format!("vectors.{lang}.txt"));
        model.export_text(lang, source, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::EvalWt(a) => cmd_eval_wt(a),
        Command::EvalSr(a) => cmd_eval_sr(a),
        Command::EvalWs(a) => cmd_eval_ws(a),
        Command::ClassifyTrain(a) => cmd_classify_train(a),
        Command::ClassifyEval(a) => cmd_classify_eval(a),
        Command::Export(a) => cmd_export(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
