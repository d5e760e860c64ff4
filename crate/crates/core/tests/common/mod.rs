#![allow(dead_code)]

pub mod oracles;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use declare::corpus::{Article, ClaimInstance, Label};
use declare::embeddings::{build_source_table, WordEmbeddings};
use declare::model::{Head, Hyperparams, ModelParams};
use declare::numeric::Matrix;
use declare::training::{Setup, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FILLER: usize = 60;

/// Embeddings for `FILLER` neutral words plus the two cue words.
pub fn synthetic_embeddings(dim: usize, seed: u64) -> WordEmbeddings {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(String, Vec<f64>)> = (0..FILLER)
        .map(|i| (format!("w{i}"), (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    for cue in ["confirmed", "debunked"] {
        pairs.push((cue.to_string(), (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()));
    }
    WordEmbeddings::from_pairs(pairs).unwrap()
}

/// Claims whose articles mention "confirmed" when the claim is true and
/// "debunked" when it is false, among random filler words.
pub fn synthetic_corpus(claims: usize, articles: usize, len: usize, seed: u64) -> Vec<ClaimInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..claims)
        .map(|i| {
            let truth = i % 2 == 0;
            let claim: Vec<String> = (0..6).map(|_| format!("w{}", rng.gen_range(0..FILLER))).collect();
            let arts = (0..articles)
                .map(|_| {
                    let mut words: Vec<String> =
                        (0..len).map(|_| format!("w{}", rng.gen_range(0..FILLER))).collect();
                    let cue = if truth { "confirmed" } else { "debunked" };
                    for _ in 0..2 {
                        let at = rng.gen_range(0..len);
                        words[at] = cue.to_string();
                    }
                    Article::new(words.join(" "), format!("site{}.com", rng.gen_range(0..4)))
                })
                .collect();
            ClaimInstance::new(
                format!("c{i:03}"),
                claim.join(" "),
                Some(format!("speaker{}", i % 3)),
                arts,
                Some(Label::Binary(truth)),
            )
        })
        .collect()
}

pub fn small_setup(dim: usize) -> Setup {
    Setup {
        hyper: Hyperparams {
            word_dim: dim,
            claim_source_dim: None,
            article_source_dim: 4,
            lstm_hidden: 8,
            dense_size: 8,
            dropout: 0.0,
            head: Head::Binary,
        },
        train: TrainConfig {
            learning_rate: 0.01,
            batch_size: 16,
            max_epochs: 200,
            patience: 200,
            seed: 7,
            ..TrainConfig::default()
        },
        claim_min_support: 5,
        article_min_support: 10,
    }
}

pub fn counts<'a>(it: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in it {
        *m.entry(s.to_string()).or_insert(0) += 1;
    }
    m
}

/// Writes word vectors in the whitespace-separated text format.
pub fn write_embeddings(emb: &WordEmbeddings, path: &Path) {
    let mut text = String::new();
    for token in emb.vocabulary().tokens() {
        let values: Vec<String> = emb.lookup(token).iter().map(|v| v.to_string()).collect();
        text.push_str(&format!("{token} {}\n", values.join(" ")));
    }
    std::fs::write(path, text).unwrap();
}

pub fn write_instances(instances: &[ClaimInstance], path: &Path) {
    let mut out = Vec::new();
    declare::corpus::write_corpus(instances, &mut out).unwrap();
    std::fs::write(path, out).unwrap();
}

/// TOML config matching `small_setup` with the given epoch budget.
pub fn small_config_toml(max_epochs: usize) -> String {
    format!(
        "claim_source_dim = 0\narticle_source_dim = 4\nlstm_hidden = 8\ndense_size = 8\ndropout = 0.0\n\
         learning_rate = 0.01\nbatch_size = 16\nmax_epochs = {max_epochs}\npatience = {max_epochs}\nseed = 7\n\
         claim_min_support = 5\narticle_min_support = 10\n"
    )
}

/// Writes a synthetic corpus, its embeddings and a small config into `dir`.
pub fn write_fixture(dir: &Path, claims: usize, max_epochs: usize) -> (PathBuf, PathBuf, PathBuf) {
    let corpus = dir.join("corpus.jsonl");
    let vectors = dir.join("vectors.txt");
    let config = dir.join("config.toml");
    write_instances(&synthetic_corpus(claims, 3, 20, 2), &corpus);
    write_embeddings(&synthetic_embeddings(8, 1), &vectors);
    std::fs::write(&config, small_config_toml(max_epochs)).unwrap();
    (corpus, vectors, config)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Randomly initialised model with non-zero biases. Both source tables have
/// three rows; the claim source table is present when `claim_sources`.
pub fn random_params(d: usize, h: usize, f: usize, head: Head, claim_sources: bool, seed: u64) -> ModelParams<f64> {
    let hyper = Hyperparams {
        word_dim: d,
        claim_source_dim: claim_sources.then_some(2),
        article_source_dim: 3,
        lstm_hidden: h,
        dense_size: f,
        dropout: 0.0,
        head,
    };
    let counts: BTreeMap<String, usize> = [("a".to_string(), 5), ("b".to_string(), 5)].into();
    let claim = claim_sources.then(|| build_source_table(&counts, 1, 2, seed ^ 1).unwrap());
    let article = build_source_table(&counts, 1, 3, seed ^ 2).unwrap();
    let mut params = ModelParams::init(hyper, claim, article, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
    for key in params.keys() {
        let m = params.get_mut(key).unwrap();
        if m.cols() == 1 {
            for v in m.as_mut_slice() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
    }
    params
}

/// Vocabulary `v0..v29` with non-negative components, so window cosines
/// spread around the snippet threshold.
pub fn snippet_embeddings(seed: u64) -> WordEmbeddings {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    WordEmbeddings::from_pairs((0..30).map(|i| (format!("v{i}"), (0..6).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<f64>>())))
        .unwrap()
}

/// Random claim and article over `v0..v34`; `v30..v34` are out of
/// vocabulary.
pub fn snippet_case(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<String>) {
    let word = |rng: &mut ChaCha8Rng| format!("v{}", rng.gen_range(0..35));
    let claim_len = rng.gen_range(2..8);
    let claim: Vec<String> = (0..claim_len).map(|_| word(rng)).collect();
    let article_len = rng.gen_range(20..300);
    let article: Vec<String> = (0..article_len).map(|_| word(rng)).collect();
    (claim, article)
}

/// Random scores in [0, 1] with frequent ties and random binary labels.
pub fn metric_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.gen_range(2..60);
    let coarse = rng.gen_bool(0.5);
    let scores = (0..n)
        .map(|_| {
            let s: f64 = rng.gen_range(0.0..1.0);
            if coarse {
                (s * 10.0).round() / 10.0
            } else {
                s
            }
        })
        .collect();
    let labels = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    (scores, labels)
}

/// Random point cloud with a well-separated spectrum in a random rotated
/// basis.
pub fn pca_case(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let m = rng.gen_range(6..40);
    let n = rng.gen_range(2..8);
    let q = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
    let scales: Vec<f64> = (0..n).map(|j| 3.0f64.powi(-(j as i32)) * rng.gen_range(0.9..1.1)).collect();
    let shift: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    (0..m)
        .map(|_| {
            let z: Vec<f64> = scales.iter().map(|s| s * rng.gen_range(-1.0..1.0)).collect();
            (0..n).map(|i| shift[i] + (0..n).map(|j| q[(i, j)] * z[j]).sum::<f64>()).collect()
        })
        .collect()
}
