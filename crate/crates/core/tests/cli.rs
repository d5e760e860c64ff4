mod common;

use std::path::Path;
use std::process::{Command, Output};

use declare::checkpoint::Checkpoint;
use declare::corpus::{Article, ClaimInstance, Label};
use declare::embeddings::SourceEmbeddingTable;
use declare::model::{Head, Hyperparams, ModelParams};
use declare::numeric::Matrix;

fn declare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_declare")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(declare(&["--help"]).status.code(), Some(0));
    assert_eq!(declare(&["--version"]).status.code(), Some(0));
    assert_eq!(declare(&[]).status.code(), Some(2));
    assert_eq!(declare(&["train", "--no-such-flag"]).status.code(), Some(2));
    let missing = declare(&["eval", "--predictions", "/nonexistent/p.tsv", "--corpus", "/nonexistent/c.jsonl"]);
    assert_eq!(missing.status.code(), Some(1));
    let err = stderr(&missing);
    assert!(err.starts_with("error: ") && err.lines().count() == 1, "{err}");
    assert_eq!(declare(&["eval", "--predictions", "x", "--corpus", "y", "--preset", "bogus"]).status.code(), Some(2));
}

#[test]
fn gradcheck_passes() {
    let out = declare(&["gradcheck", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("max relative error"));
}

/// A model whose article score is `sigmoid(row - l)` with `l = logit(0.8)`,
/// so the article source rows 0 and 2l give scores 0.2 and 0.8.
fn two_score_checkpoint(dim: usize, fingerprint: String) -> Checkpoint<f64> {
    let l = (0.8f64 / 0.2).ln();
    let hyper = Hyperparams {
        word_dim: dim,
        claim_source_dim: None,
        article_source_dim: 1,
        lstm_hidden: 2,
        dense_size: 1,
        dropout: 0.0,
        head: Head::Binary,
    };
    let table = SourceEmbeddingTable::from_parts(
        vec![("low.com".into(), 1), ("high.com".into(), 2)],
        Matrix::from_vec(3, 1, vec![0.0, 0.0, 2.0 * l]).unwrap(),
    )
    .unwrap();
    let mut params = ModelParams::init(hyper, None, table, 1).unwrap();
    params.fusion_weight = Matrix::from_vec(1, 5, vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    params.dense_weight = Matrix::scalar(1.0);
    params.output_weight = Matrix::scalar(1.0);
    params.output_bias = Matrix::scalar(-l);
    Checkpoint { params, embeddings_fingerprint: fingerprint, metadata: Default::default() }
}

#[test]
fn predict_averages_article_scores() {
    let dir = tempfile::tempdir().unwrap();
    let emb = common::synthetic_embeddings(8, 1);
    let vectors = dir.path().join("vectors.txt");
    common::write_embeddings(&emb, &vectors);
    let ckpt = dir.path().join("model.json");
    two_score_checkpoint(8, emb.fingerprint()).save(&ckpt).unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let claim = ClaimInstance::new(
        "c1",
        "w1 w2",
        None,
        vec![Article::new("w3 w4 w5", "low.com"), Article::new("w6 confirmed", "high.com")],
        Some(Label::Binary(true)),
    );
    common::write_instances(&[claim], &corpus);
    let out = declare(&["predict", "--checkpoint", p(&ckpt), "--corpus", p(&corpus), "--embeddings", p(&vectors)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "c1");
    let cred: f64 = row[1].parse().unwrap();
    assert!((cred - 0.5).abs() < 1e-12, "{cred}");
}

#[test]
fn predict_refuses_other_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let emb = common::synthetic_embeddings(8, 1);
    let vectors = dir.path().join("vectors.txt");
    common::write_embeddings(&emb, &vectors);
    let ckpt = dir.path().join("model.json");
    two_score_checkpoint(8, "something else".into()).save(&ckpt).unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    common::write_instances(&common::synthetic_corpus(2, 1, 5, 1), &corpus);
    let out = declare(&["predict", "--checkpoint", p(&ckpt), "--corpus", p(&corpus), "--embeddings", p(&vectors)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("different word embeddings"));
}

#[test]
fn explain_escapes_html() {
    let dir = tempfile::tempdir().unwrap();
    let emb = common::synthetic_embeddings(8, 1);
    let vectors = dir.path().join("vectors.txt");
    common::write_embeddings(&emb, &vectors);
    let ckpt = dir.path().join("model.json");
    two_score_checkpoint(8, emb.fingerprint()).save(&ckpt).unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let claim = ClaimInstance::new(
        "x/1",
        "w1 <script>alert(1)</script>",
        None,
        vec![Article::new("w3 <b>bold</b> & w4", "low.com")],
        None,
    );
    common::write_instances(&[claim], &corpus);
    let out_dir = dir.path().join("explained");
    let out = declare(&[
        "explain", "--checkpoint", p(&ckpt), "--corpus", p(&corpus), "--embeddings", p(&vectors),
        "--out", p(&out_dir), "--format", "html",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let html = std::fs::read_to_string(out_dir.join("x_1.html")).unwrap();
    assert!(html.contains("&lt;script&gt;"));
    assert!(!html.contains("<script>"));
    assert!(!html.contains("<b>bold"));
}

#[test]
fn pipeline_with_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    common::write_fixture(dir.path(), 30, 3);
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_declare"))
            .args(args)
            .env("DECLARE_DATA_DIR", dir.path())
            .current_dir(std::env::temp_dir())
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", stderr(&out));
        out
    };
    let ingested = dir.path().join("ingested.jsonl");
    let out = run(&["ingest", "--corpus", "corpus.jsonl", "--embeddings", "vectors.txt", "--out", p(&ingested), "--no-snippets"]);
    assert!(stdout(&out).contains("claims: 30"));
    assert!(stdout(&out).contains("articles: 90"));
    let model_dir = dir.path().join("model");
    let out = run(&[
        "train", "--corpus", "corpus.jsonl", "--embeddings", "vectors.txt", "--config", "config.toml",
        "--out", p(&model_dir), "--folds", "2", "--quiet",
    ]);
    assert!(stdout(&out).contains("mean over 2 folds"));
    for f in ["fold-0.json", "fold-1.json", "fold-0.metrics", "fold-1.metrics", "train.log", "summary.txt"] {
        assert!(model_dir.join(f).exists(), "{f}");
    }
    let metrics = std::fs::read_to_string(model_dir.join("fold-0.metrics")).unwrap();
    assert!(metrics.contains("macro_f1=") && metrics.contains("auc="));
    let preds = dir.path().join("preds.tsv");
    run(&[
        "predict", "--checkpoint", "model/fold-0.json", "--corpus", "corpus.jsonl", "--embeddings", "vectors.txt",
        "--out", p(&preds),
    ]);
    assert_eq!(std::fs::read_to_string(&preds).unwrap().lines().count(), 31);
    let out = run(&["eval", "--predictions", "preds.tsv", "--corpus", "corpus.jsonl", "--key-value"]);
    assert!(stdout(&out).contains("count=30"));
}

#[test]
fn training_rejects_mismatched_word_dim() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, vectors, config) = common::write_fixture(dir.path(), 20, 1);
    let mut text = std::fs::read_to_string(&config).unwrap();
    text.push_str("word_dim = 50\n");
    std::fs::write(&config, text).unwrap();
    let out = declare(&[
        "train", "--corpus", p(&corpus), "--embeddings", p(&vectors), "--config", p(&config),
        "--out", p(&dir.path().join("m")), "--folds", "2",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}
