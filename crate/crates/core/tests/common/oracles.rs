//! Straight-line reference implementations used as test oracles.

use std::collections::HashSet;

use declare::embeddings::WordEmbeddings;
use declare::model::{Direction, Gate, Head, ModelParams};
use declare::numeric::Matrix;

pub fn matmul_naive(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    assert_eq!(a.cols(), b.rows());
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

/// Fraction of positive-negative pairs ranked correctly, ties counted half.
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Mean over classes of `2 TP / (2 TP + FP + FN)` from a confusion matrix.
pub fn macro_f1_confusion(predicted: &[usize], actual: &[usize], classes: usize) -> f64 {
    let mut cm = vec![vec![0usize; classes]; classes];
    for (&p, &a) in predicted.iter().zip(actual) {
        cm[a][p] += 1;
    }
    let mut total = 0.0;
    for (c, row) in cm.iter().enumerate() {
        let tp = row[c];
        let fn_: usize = row.iter().sum::<usize>() - tp;
        let fp: usize = cm.iter().map(|r| r[c]).sum::<usize>() - tp;
        let denom = 2 * tp + fp + fn_;
        total += if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    }
    total / classes as f64
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn mean_vector(tokens: &[String], emb: &WordEmbeddings) -> Vec<f64> {
    let mut sum = vec![0.0; emb.dim()];
    for t in tokens {
        if emb.contains(t) {
            for (s, v) in sum.iter_mut().zip(emb.lookup(t)) {
                *s += v;
            }
        }
    }
    sum.iter().map(|s| s / tokens.len() as f64).collect()
}

/// Exhaustive window scan: every window is scored from scratch. Returns the
/// earliest start within `tie` of the best score and that score.
pub fn best_window(claim: &[String], article: &[String], emb: &WordEmbeddings, window: usize, tie: f64) -> (usize, f64) {
    let w = window.min(article.len());
    let types: HashSet<&String> = claim.iter().collect();
    let claim_vec = mean_vector(claim, emb);
    let sims: Vec<f64> = (0..=article.len() - w)
        .map(|s| {
            let win = &article[s..s + w];
            let present = types.iter().filter(|t| win.contains(t)).count();
            let bow = present as f64 / types.len() as f64;
            bow * cosine(&claim_vec, &mean_vector(win, emb))
        })
        .collect();
    let best = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let start = sims.iter().position(|&s| s >= best - tie).unwrap();
    (start, sims[start])
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mat_vec(m: &Matrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| m.get(r, c) * v[c]).sum())
        .collect()
}

/// One LSTM direction over `columns`, returning the hidden state at each
/// position in input order.
pub fn lstm_reference(params: &ModelParams<f64>, dir: Direction, columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = params.lstm(dir);
    let h_dim = params.hyper.lstm_hidden;
    let mut h = vec![0.0; h_dim];
    let mut c = vec![0.0; h_dim];
    let mut out = vec![Vec::new(); columns.len()];
    let order: Vec<usize> = match dir {
        Direction::Forward => (0..columns.len()).collect(),
        Direction::Backward => (0..columns.len()).rev().collect(),
    };
    for t in order {
        let z: Vec<f64> = columns[t].iter().chain(&h).copied().collect();
        let gate = |g: Gate| -> Vec<f64> {
            mat_vec(p.weight(g), &z)
                .iter()
                .zip(p.bias(g).as_slice())
                .map(|(a, b)| a + b)
                .collect()
        };
        let (i, f, o, g) = (gate(Gate::Input), gate(Gate::Forget), gate(Gate::Output), gate(Gate::Cell));
        for j in 0..h_dim {
            c[j] = sigmoid(f[j]) * c[j] + sigmoid(i[j]) * g[j].tanh();
            h[j] = sigmoid(o[j]) * c[j].tanh();
        }
        out[t] = h.clone();
    }
    out
}

/// Full per-article forward pass without dropout: returns the attention
/// weights, the article vector and the head output.
pub fn article_reference(
    params: &ModelParams<f64>,
    columns: &[Vec<f64>],
    claim_mean: &[f64],
    claim_source: Option<usize>,
    article_source: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let fwd = lstm_reference(params, Direction::Forward, columns);
    let bwd = lstm_reference(params, Direction::Backward, columns);
    let scores: Vec<f64> = columns
        .iter()
        .map(|a| {
            let joined: Vec<f64> = a.iter().chain(claim_mean).copied().collect();
            (mat_vec(&params.attention_weight, &joined)[0] + params.attention_bias.get(0, 0)).tanh()
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let alpha: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let k = columns.len() as f64;
    let h2 = 2 * params.hyper.lstm_hidden;
    let g: Vec<f64> = (0..h2)
        .map(|r| {
            (0..columns.len())
                .map(|t| {
                    let h = if r < h2 / 2 { fwd[t][r] } else { bwd[t][r - h2 / 2] };
                    alpha[t] * h
                })
                .sum::<f64>()
                / k
        })
        .collect();
    let mut fused = g.clone();
    if let (Some(row), Some(table)) = (claim_source, &params.claim_sources) {
        fused.extend_from_slice(table.vector(row));
    }
    fused.extend_from_slice(params.article_sources.vector(article_source));
    let dense = |w: &Matrix<f64>, b: &Matrix<f64>, x: &[f64]| -> Vec<f64> {
        mat_vec(w, x).iter().zip(b.as_slice()).map(|(a, b)| (a + b).max(0.0)).collect()
    };
    let d1 = dense(&params.fusion_weight, &params.fusion_bias, &fused);
    let d2 = dense(&params.dense_weight, &params.dense_bias, &d1);
    let logits: Vec<f64> = mat_vec(&params.output_weight, &d2)
        .iter()
        .zip(params.output_bias.as_slice())
        .map(|(a, b)| a + b)
        .collect();
    let out = match params.hyper.head {
        Head::Binary => vec![sigmoid(logits[0])],
        Head::Regression => logits,
        Head::Multiclass { .. } => {
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|x| x / s).collect()
        }
    };
    (alpha, g, out)
}

/// Top two eigenpairs of the sample covariance from a dense symmetric
/// eigendecomposition, with projections of the centred data.
pub fn pca_reference(vectors: &[Vec<f64>]) -> ([f64; 2], [Vec<f64>; 2], Vec<[f64; 2]>) {
    let m = vectors.len();
    let n = vectors[0].len();
    let mean: Vec<f64> = (0..n).map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / m as f64).collect();
    let x = nalgebra::DMatrix::from_fn(m, n, |i, j| vectors[i][j] - mean[j]);
    let cov = x.transpose() * &x / m as f64;
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let comp = |k: usize| -> Vec<f64> { eig.eigenvectors.column(order[k]).iter().copied().collect() };
    let comps = [comp(0), comp(1)];
    let proj = (0..m)
        .map(|i| {
            let p = |c: &Vec<f64>| (0..n).map(|j| x[(i, j)] * c[j]).sum::<f64>();
            [p(&comps[0]), p(&comps[1])]
        })
        .collect();
    let ratio = [eig.eigenvalues[order[0]] / total, eig.eigenvalues[order[1]] / total];
    (ratio, comps, proj)
}
