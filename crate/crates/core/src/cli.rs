//! Command-line front end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{checkpoint_precision, Checkpoint};
use crate::corpus::{
    apply_blocklist, extract_snippets, ingest, make_folds, read_blocklist, source_counts, write_corpus,
    ClaimInstance, DEFAULT_DELTA, DEFAULT_FOLDS,
};
use crate::embeddings::{load_word_vectors, WordEmbeddings};
use crate::error::{Error, Result};
use crate::explain::{annotate, pca_project, render_claim, Format};
use crate::metrics::MetricReport;
use crate::model::{forward_article, Head, ModelParams, Verdict};
use crate::numeric::Scalar;
use crate::training::{
    encode_claims, evaluate, gradient_check, predict_claims, tiny_instance, train, ClaimPrediction, ConfigFile,
    EncodedClaim, EpochLog, Precision, Preset, Setup,
};

/// Environment variable naming the directory relative input paths are
/// resolved against.
pub const DATA_DIR_ENV: &str = "DECLARE_DATA_DIR";

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "declare", version, about = "Evidence-aware credibility assessment of claims")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read a raw corpus, keep the most claim-relevant snippet of each
    /// article and write the result.
    Ingest(IngestArgs),
    /// Cross-validated training; writes one checkpoint and report per fold.
    Train(TrainArgs),
    /// Per-claim credibility and verdict from a checkpoint.
    Predict(PredictArgs),
    /// Attention-highlighted snippets and projections of article vectors.
    Explain(ExplainArgs),
    /// Metrics of a predictions file against corpus labels.
    Eval(EvalArgs),
    /// Finite-difference check of the analytic gradients on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct EmbeddingArgs {
    /// Word vectors, one token and its components per line.
    #[arg(long)]
    embeddings: PathBuf,
    /// Read only the first N vectors.
    #[arg(long)]
    vocab_limit: Option<usize>,
}

#[derive(Args, Debug)]
struct SetupArgs {
    /// TOML config file; may name a preset and override any value.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset preset: snopes, politifact, newstrust or semeval.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    embeddings: EmbeddingArgs,
    #[arg(long)]
    out: PathBuf,
    /// Minimum snippet relevance; articles below it are dropped.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Article sources to exclude, one per line.
    #[arg(long)]
    blocklist: Option<PathBuf>,
    /// Keep whole articles instead of extracting snippets.
    #[arg(long)]
    no_snippets: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    embeddings: EmbeddingArgs,
    #[command(flatten)]
    setup: SetupArgs,
    /// Output directory for checkpoints, reports and the training log.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of cross-validation folds.
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, value_parser = ["32", "64"])]
    precision: Option<String>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    embeddings: EmbeddingArgs,
    /// Write predictions here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    embeddings: EmbeddingArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "html")]
    format: String,
    /// Only explain these claim ids.
    #[arg(long)]
    claim: Vec<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predictions written by `predict`.
    #[arg(long)]
    predictions: PathBuf,
    /// Corpus holding the labels.
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    setup: SetupArgs,
    /// Print `key=value` lines instead of the table.
    #[arg(long)]
    key_value: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random entries probed per parameter tensor.
    #[arg(long, default_value_t = 16)]
    probes: usize,
    /// binary, multiclass or regression.
    #[arg(long, default_value = "binary")]
    head: String,
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit status.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => 2,
        _ => 1,
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

/// Resolves a relative input path against the data directory, when set.
pub fn resolve_input(path: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn load_embeddings(args: &EmbeddingArgs) -> Result<WordEmbeddings> {
    load_word_vectors(&resolve_input(&args.embeddings), args.vocab_limit)
}

fn load_corpus(path: &Path) -> Result<Vec<ClaimInstance>> {
    Ok(ingest(&resolve_input(path))?.instances)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn resolve_setup(args: &SetupArgs) -> Result<(Setup, ConfigFile)> {
    let preset = args.preset.as_deref().map(str::parse::<Preset>).transpose()?;
    let file = match &args.config {
        Some(path) => ConfigFile::load(&resolve_input(path))?,
        None => ConfigFile::default(),
    };
    Ok((file.resolve(preset)?, file))
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.delta) {
        return Err(Error::Usage(format!("--delta {} outside [0, 1]", a.delta)));
    }
    let report = ingest(&resolve_input(&a.corpus))?;
    let mut instances = report.instances;
    let mut blocked = 0;
    if let Some(path) = &a.blocklist {
        let path = resolve_input(path);
        let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        blocked = apply_blocklist(&mut instances, &read_blocklist(BufReader::new(f))?);
    }
    let mut dropped = 0;
    if !a.no_snippets {
        let emb = load_embeddings(&a.embeddings)?;
        dropped = extract_snippets(&mut instances, &emb, a.delta);
    }
    let mut out = Vec::new();
    write_corpus(&instances, &mut out)?;
    fs::write(&a.out, out).map_err(|e| Error::io(&a.out, e))?;
    let (claim_sources, article_sources) = source_counts(&instances);
    println!("claims: {}", instances.len());
    println!("articles: {}", instances.iter().map(|i| i.articles.len()).sum::<usize>());
    println!("claim sources: {}", claim_sources.len());
    println!("article sources: {}", article_sources.len());
    println!("skipped claims without articles: {}", report.skipped);
    println!("blocklisted articles: {blocked}");
    println!("articles below delta: {dropped}");
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let (mut setup, file) = resolve_setup(&a.setup)?;
    if let Some(seed) = a.seed {
        setup.train.seed = seed;
    }
    if let Some(p) = &a.precision {
        setup.train.precision = p.parse()?;
    }
    if let Some(n) = a.max_epochs {
        setup.train.max_epochs = n;
    }
    if a.folds == 0 {
        return Err(Error::Usage("--folds must be at least 1".into()));
    }
    let emb = load_embeddings(&a.embeddings)?;
    match file.word_dim {
        Some(d) if d != emb.dim() => {
            return Err(Error::Usage(format!(
                "config word_dim {d} differs from the embedding dimension {}",
                emb.dim()
            )))
        }
        _ => setup.hyper.word_dim = emb.dim(),
    }
    setup.validate()?;
    let instances = load_corpus(&a.corpus)?;
    create_dir(&a.out)?;
    match setup.train.precision {
        Precision::F32 => train_with::<f32>(&a, &setup, &instances, &emb),
        Precision::F64 => train_with::<f64>(&a, &setup, &instances, &emb),
    }
}

fn train_with<T: Scalar>(a: &TrainArgs, setup: &Setup, instances: &[ClaimInstance], emb: &WordEmbeddings) -> Result<()> {
    let ids: Vec<String> = instances.iter().map(|i| i.id.clone()).collect();
    let plan = make_folds(&ids, a.folds, setup.train.seed)?;
    let quiet = a.quiet;
    let progress = move |fold: usize, log: &EpochLog| {
        if !quiet {
            eprintln!("fold {fold} {log}");
        }
    };
    let outcomes = train::<T>(instances, &plan, emb, setup, &progress)?;
    let fingerprint = emb.fingerprint();
    let mut log = String::new();
    let mut summary = String::new();
    for o in &outcomes {
        let metadata: BTreeMap<String, String> = [
            ("fold".to_string(), o.fold.to_string()),
            ("best_epoch".to_string(), o.best_epoch.to_string()),
            ("seed".to_string(), setup.train.seed.to_string()),
            ("folds".to_string(), a.folds.to_string()),
        ]
        .into();
        let ckpt = Checkpoint {
            params: o.params.clone(),
            embeddings_fingerprint: fingerprint.clone(),
            metadata,
        };
        ckpt.save(&a.out.join(format!("fold-{}.json", o.fold)))?;
        write_file(&a.out.join(format!("fold-{}.metrics", o.fold)), &o.report.to_key_value_text())?;
        for e in &o.history {
            let _ = writeln!(log, "fold {} {e}", o.fold);
        }
        let _ = writeln!(summary, "== fold {} (best epoch {}) ==\n{}", o.fold, o.best_epoch, o.report);
    }
    summary.push_str(&mean_report_text(&outcomes.iter().map(|o| &o.report).collect::<Vec<_>>()));
    write_file(&a.out.join("train.log"), &log)?;
    write_file(&a.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn mean_report_text(reports: &[&MetricReport]) -> String {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in reports {
        let fields = [
            ("accuracy", r.accuracy),
            ("macro_accuracy", r.macro_accuracy),
            ("macro_f1", r.macro_f1),
            ("auc", r.auc.and_then(|a| a.value())),
            ("mse", r.mse),
            ("rmse", r.rmse),
        ];
        for (k, v) in fields {
            if let Some(v) = v {
                let e = sums.entry(k).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
        }
    }
    let mut out = format!("== mean over {} folds ==\n", reports.len());
    for (k, (s, n)) in sums {
        let _ = writeln!(out, "{k}={}", s / n as f64);
    }
    out
}

fn load_model<T: Scalar>(path: &Path, emb: &WordEmbeddings) -> Result<ModelParams<T>> {
    let ckpt = Checkpoint::<T>::load(path)?;
    if ckpt.embeddings_fingerprint != emb.fingerprint() {
        return Err(Error::Contract(format!(
            "{} was trained with different word embeddings",
            path.display()
        )));
    }
    if ckpt.params.hyper.word_dim != emb.dim() {
        return Err(Error::Contract("checkpoint word dimension differs from the embeddings".into()));
    }
    Ok(ckpt.params)
}

fn with_precision<R>(
    checkpoint: &Path,
    f32_path: impl FnOnce() -> Result<R>,
    f64_path: impl FnOnce() -> Result<R>,
) -> Result<R> {
    match checkpoint_precision(checkpoint)? {
        32 => f32_path(),
        64 => f64_path(),
        other => Err(Error::Format(format!("unsupported checkpoint precision {other}"))),
    }
}

fn format_credibility(c: &[f64]) -> String {
    c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let ckpt = resolve_input(&a.checkpoint);
    let emb = load_embeddings(&a.embeddings)?;
    let instances = load_corpus(&a.corpus)?;
    let predictions = with_precision(
        &ckpt,
        || predict_with::<f32>(&ckpt, &emb, &instances),
        || predict_with::<f64>(&ckpt, &emb, &instances),
    )?;
    let mut text = String::from("id\tcredibility\tverdict\n");
    for p in &predictions {
        let _ = writeln!(text, "{}\t{}\t{}", p.id, format_credibility(&p.credibility), p.verdict.label());
    }
    match &a.out {
        Some(path) => write_file(path, &text),
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn predict_with<T: Scalar>(
    ckpt: &Path,
    emb: &WordEmbeddings,
    instances: &[ClaimInstance],
) -> Result<Vec<ClaimPrediction>> {
    let params = load_model::<T>(ckpt, emb)?;
    let claims = encode_unlabelled(instances, emb, &params)?;
    predict_claims(&params, &claims, emb)
}

/// Encodes claims, dropping labels that do not fit the head so that
/// prediction works on any corpus.
fn encode_unlabelled<T: Scalar>(
    instances: &[ClaimInstance],
    emb: &WordEmbeddings,
    params: &ModelParams<T>,
) -> Result<Vec<EncodedClaim<T>>> {
    let stripped: Vec<ClaimInstance> = instances
        .iter()
        .map(|i| ClaimInstance { label: None, ..i.clone() })
        .collect();
    encode_claims(&stripped, emb, params)
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn cmd_explain(a: ExplainArgs) -> Result<()> {
    let format: Format = a.format.parse()?;
    let ckpt = resolve_input(&a.checkpoint);
    let emb = load_embeddings(&a.embeddings)?;
    let mut instances = load_corpus(&a.corpus)?;
    if !a.claim.is_empty() {
        instances.retain(|i| a.claim.contains(&i.id));
        if instances.is_empty() {
            return Err(Error::Usage("none of the requested claims is in the corpus".into()));
        }
    }
    create_dir(&a.out)?;
    let written = with_precision(
        &ckpt,
        || explain_with::<f32>(&a, &ckpt, &emb, &instances, format),
        || explain_with::<f64>(&a, &ckpt, &emb, &instances, format),
    )?;
    println!("wrote {written} files to {}", a.out.display());
    Ok(())
}

fn explain_with<T: Scalar>(
    a: &ExplainArgs,
    ckpt: &Path,
    emb: &WordEmbeddings,
    instances: &[ClaimInstance],
    format: Format,
) -> Result<usize> {
    let params = load_model::<T>(ckpt, emb)?;
    let claims = encode_unlabelled(instances, emb, &params)?;
    let mut written = 0;
    let mut vectors = Vec::new();
    let mut names = Vec::new();
    let mut labels = Vec::new();
    for (inst, claim) in instances.iter().zip(&claims) {
        let mut annotations = Vec::new();
        let mut scores = Vec::new();
        let mut traces = Vec::new();
        for (k, article) in inst.articles.iter().enumerate() {
            let trace = forward_article(&params, &claim.input(k, emb), None)?;
            scores.push(trace.score.iter().map(|s| s.as_f64()).collect::<Vec<f64>>());
            vectors.push(trace.article_vector.iter().map(|x| x.as_f64()).collect());
            names.push(format!("{}#{k}", inst.id));
            labels.push(label_text(inst));
            traces.push((trace, article));
        }
        let cred = crate::model::aggregate_vectors(&scores)?;
        let verdict = Verdict::from_credibility(&params.hyper.head, &cred)?;
        for (trace, article) in &traces {
            annotations.push(annotate(trace, &article.tokens, &verdict, &inst.id, &inst.claim_text, &article.source)?);
        }
        let doc = render_claim(&inst.id, &inst.claim_text, &verdict.label(), &annotations, format)?;
        let path = a.out.join(format!("{}.{}", file_stem(&inst.id), format.extension()));
        write_file(&path, &doc)?;
        written += 1;
    }
    if vectors.len() >= 3 {
        match pca_project(&vectors, &names, &labels) {
            Ok(p) => {
                write_file(&a.out.join("article-projection.csv"), &p.to_csv())?;
                written += 1;
            }
            Err(Error::Degenerate(msg)) => eprintln!("skipping article projection: {msg}"),
            Err(e) => return Err(e),
        }
    }
    let table = &params.article_sources;
    if table.rows() >= 3 && table.dim() >= 2 {
        let mut row_names = vec!["<dummy>".to_string(); table.rows()];
        for (name, row) in table.named_rows() {
            row_names[row] = name.to_string();
        }
        let rows: Vec<Vec<f64>> = (0..table.rows())
            .map(|r| table.vector(r).iter().map(|x| x.as_f64()).collect())
            .collect();
        let kinds = vec!["article_source".to_string(); rows.len()];
        if let Ok(p) = pca_project(&rows, &row_names, &kinds) {
            write_file(&a.out.join("source-projection.csv"), &p.to_csv())?;
            written += 1;
        }
    }
    Ok(written)
}

fn label_text(inst: &ClaimInstance) -> String {
    use crate::corpus::Label;
    match &inst.label {
        Some(Label::Binary(b)) => b.to_string(),
        Some(Label::Category(s)) => s.clone(),
        Some(Label::Score(x)) => x.to_string(),
        None => "unlabelled".into(),
    }
}

/// Parses the tab-separated predictions written by `predict`.
pub fn read_predictions(text: &str, head: &Head) -> Result<Vec<ClaimPrediction>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.starts_with("id\t") || line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| Error::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(parse("expected id and credibility columns".into()));
        }
        let credibility = fields[1]
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| parse(format!("{x:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if credibility.len() != head.outputs() {
            return Err(parse(format!(
                "{} credibility values for a head with {} outputs",
                credibility.len(),
                head.outputs()
            )));
        }
        let verdict = Verdict::from_credibility(head, &credibility)?;
        out.push(ClaimPrediction {
            id: fields[0].to_string(),
            article_scores: Vec::new(),
            credibility,
            verdict,
        });
    }
    Ok(out)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (setup, _) = resolve_setup(&a.setup)?;
    let head = setup.hyper.head.clone();
    let path = resolve_input(&a.predictions);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let predictions = read_predictions(&text, &head)?;
    let instances = load_corpus(&a.corpus)?;
    let by_id: BTreeMap<&str, &ClaimInstance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut targets = Vec::with_capacity(predictions.len());
    for p in &predictions {
        let inst = by_id
            .get(p.id.as_str())
            .ok_or_else(|| Error::Record { id: p.id.clone(), message: "not in the corpus".into() })?;
        let label = inst
            .label
            .as_ref()
            .ok_or_else(|| Error::Record { id: p.id.clone(), message: "claim has no label".into() })?;
        targets.push(crate::training::target_for(label, &head)?);
    }
    let claims: Vec<EncodedClaim<f64>> = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| EncodedClaim {
            id: p.id.clone(),
            claim_mean: crate::numeric::Matrix::zeros(0, 1),
            claim_source: None,
            articles: Vec::new(),
            target: Some(t),
        })
        .collect();
    let report = evaluate(&head, &predictions, &claims)?;
    if a.key_value {
        print!("{}", report.to_key_value_text());
    } else {
        print!("{report}");
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let head = match a.head.as_str() {
        "binary" => Head::Binary,
        "regression" => Head::Regression,
        "multiclass" => Head::Multiclass {
            classes: ["true", "false", "unverified"].map(String::from).to_vec(),
        },
        other => return Err(Error::Usage(format!("unknown head {other:?}"))),
    };
    if a.probes == 0 {
        return Err(Error::Usage("--probes must be at least 1".into()));
    }
    let instance = tiny_instance(head, a.seed)?;
    let report = gradient_check(&instance, a.probes, a.seed)?;
    for g in &report.groups {
        println!("{:<32} probes {:>3}  max rel. error {:.3e}", g.key.to_string(), g.probes, g.max_rel_error);
    }
    println!("max relative error: {:e}", report.max_rel_error);
    if report.max_rel_error >= GRADCHECK_TOLERANCE {
        return Err(Error::Contract(format!(
            "gradient check failed: {:e} >= {GRADCHECK_TOLERANCE:e}",
            report.max_rel_error
        )));
    }
    Ok(())
}
