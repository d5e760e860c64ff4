//! The per-article forward pass, built on the differentiation tape.
//!
//! Each stage exists twice: a `*_graph` function that records onto a
//! caller-owned [`Tape`] (used by training and gradient checks), and a
//! plain function that builds a throwaway tape and returns values.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Direction, Gate, Head, ModelParams, ParamKey};
use crate::error::{Error, Result};
use crate::numeric::{masked_softmax, Matrix, Scalar, Tape, Var};

pub type ModelTape<'a, T> = Tape<'a, T, ParamKey>;

/// Tape handles of every registered parameter.
pub struct ParamVars {
    vars: BTreeMap<ParamKey, Var>,
}

impl ParamVars {
    pub fn register<'a, T: Scalar>(tape: &mut ModelTape<'a, T>, params: &'a ModelParams<T>) -> Self {
        let vars = params
            .keys()
            .into_iter()
            .map(|k| (k, tape.param(k, params.get(k).expect("key from params"))))
            .collect();
        ParamVars { vars }
    }

    pub fn get(&self, key: ParamKey) -> Result<Var> {
        self.vars
            .get(&key)
            .copied()
            .ok_or_else(|| Error::Contract(format!("parameter {key} not registered")))
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn mask<T: Scalar>(&mut self, rows: usize) -> Matrix<T> {
        let keep = T::lit(1.0 / (1.0 - self.rate));
        Matrix::from_fn(rows, 1, |_, _| {
            if self.rng.gen::<f64>() < self.rate {
                T::zero()
            } else {
                keep
            }
        })
    }
}

/// Encoded inputs for one claim-article pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ArticleInput<T> {
    /// `d x k` word vectors of the article, one column per token.
    pub tokens: Matrix<T>,
    /// `d x 1` mean claim vector.
    pub claim_mean: Matrix<T>,
    /// Row in the claim source table, `None` when the model has no claim
    /// source embedding.
    pub claim_source: Option<usize>,
    pub article_source: usize,
}

/// Intermediate values of one article's forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<T> {
    /// `2H x k`, column k is `[→h_k, ←h_k]`.
    pub hidden: Matrix<T>,
    /// Pre-softmax attention scores `a'_k`.
    pub attention_scores: Vec<T>,
    /// Attention weights `α_k`.
    pub attention: Vec<T>,
    pub mask: Vec<bool>,
    /// Article representation `g`.
    pub article_vector: Vec<T>,
    pub dense1: Vec<T>,
    pub dense2: Vec<T>,
    pub logits: Vec<T>,
    /// Probability (binary), class distribution (multiclass) or score
    /// (regression).
    pub score: Vec<T>,
}

/// Handles of one article's graph.
pub struct ArticleGraph {
    pub hidden: Var,
    pub attention_scores: Var,
    pub attention: Var,
    pub article_vector: Var,
    pub dense1: Var,
    pub dense2: Var,
    pub logits: Var,
    pub score: Var,
}

fn lstm_direction_graph<T: Scalar>(
    tape: &mut ModelTape<'_, T>,
    vars: &ParamVars,
    dir: Direction,
    columns: &[Var],
    hidden: usize,
) -> Result<Vec<Var>> {
    let w = Gate::ALL
        .iter()
        .map(|&g| vars.get(ParamKey::LstmWeight(dir, g)))
        .collect::<Result<Vec<_>>>()?;
    let b = Gate::ALL
        .iter()
        .map(|&g| vars.get(ParamKey::LstmBias(dir, g)))
        .collect::<Result<Vec<_>>>()?;
    let mut h = tape.constant(Matrix::zeros(hidden, 1));
    let mut c = tape.constant(Matrix::zeros(hidden, 1));
    let mut out = vec![h; columns.len()];
    let order: Vec<usize> = match dir {
        Direction::Forward => (0..columns.len()).collect(),
        Direction::Backward => (0..columns.len()).rev().collect(),
    };
    for t in order {
        let z = tape.concat_rows(&[columns[t], h])?;
        let mut pre = [z; 4];
        for (gi, p) in pre.iter_mut().enumerate() {
            let wz = tape.matmul(w[gi], z)?;
            *p = tape.add(wz, b[gi])?;
        }
        let i = tape.sigmoid(pre[0]);
        let f = tape.sigmoid(pre[1]);
        let o = tape.sigmoid(pre[2]);
        let g = tape.tanh(pre[3]);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        c = tape.add(fc, ig)?;
        let tc = tape.tanh(c);
        h = tape.mul(o, tc)?;
        out[t] = h;
    }
    Ok(out)
}

/// Records the bidirectional encoder; returns the `2H x k` hidden matrix.
pub fn bilstm_graph<T: Scalar>(
    tape: &mut ModelTape<'_, T>,
    vars: &ParamVars,
    hidden: usize,
    tokens: &Matrix<T>,
) -> Result<Var> {
    if tokens.cols() == 0 {
        return Err(Error::Degenerate("cannot encode an empty sequence".into()));
    }
    let columns: Vec<Var> = (0..tokens.cols())
        .map(|t| tape.constant(Matrix::column(tokens.col(t))))
        .collect();
    let fwd = lstm_direction_graph(tape, vars, Direction::Forward, &columns, hidden)?;
    let bwd = lstm_direction_graph(tape, vars, Direction::Backward, &columns, hidden)?;
    let per_token = fwd
        .into_iter()
        .zip(bwd)
        .map(|(f, b)| tape.concat_rows(&[f, b]))
        .collect::<Result<Vec<_>>>()?;
    tape.concat_cols(&per_token)
}

/// Records `α = softmax(tanh(W_a (a_k ⊕ c̄) + b_a))`; returns `(α, a')`
/// as `1 x k` rows.
pub fn attention_graph<T: Scalar>(
    tape: &mut ModelTape<'_, T>,
    vars: &ParamVars,
    tokens: &Matrix<T>,
    claim_mean: &Matrix<T>,
    mask: &[bool],
) -> Result<(Var, Var)> {
    let d = tokens.rows();
    if claim_mean.shape() != (d, 1) {
        return Err(Error::shape("attend", claim_mean.shape(), (d, 1)));
    }
    if mask.len() != tokens.cols() {
        return Err(Error::shape("attend", (mask.len(), 1), (tokens.cols(), 1)));
    }
    let joined = Matrix::from_fn(2 * d, tokens.cols(), |r, c| {
        if r < d {
            tokens.get(r, c)
        } else {
            claim_mean.get(r - d, 0)
        }
    });
    let joined = tape.constant(joined);
    let projected = tape.matmul(vars.get(ParamKey::AttentionWeight)?, joined)?;
    let biased = tape.add_broadcast(projected, vars.get(ParamKey::AttentionBias)?)?;
    let scores = tape.tanh(biased);
    let alpha = tape.masked_softmax(scores, mask)?;
    Ok((alpha, scores))
}

/// Records `g = (1/k) Σ_k α_k h_k`, `k` counting unmasked tokens.
pub fn article_vector_graph<T: Scalar>(
    tape: &mut ModelTape<'_, T>,
    hidden: Var,
    alpha: Var,
    mask: &[bool],
) -> Result<Var> {
    let k = mask.iter().filter(|&&m| m).count();
    if k == 0 {
        return Err(Error::Degenerate("article vector over zero tokens".into()));
    }
    let alpha_col = tape.transpose(alpha);
    let weighted = tape.matmul(hidden, alpha_col)?;
    Ok(tape.scale(weighted, T::one() / T::lit(k as f64)))
}

/// Records the fused dense layers and output head. Returns
/// `(d1, d2, logits, score)`.
pub fn score_graph<T: Scalar>(
    tape: &mut ModelTape<'_, T>,
    vars: &ParamVars,
    head: &Head,
    article_vector: Var,
    claim_source: Option<usize>,
    article_source: usize,
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<(Var, Var, Var, Var)> {
    let mut parts = vec![article_vector];
    match (claim_source, vars.get(ParamKey::ClaimSources)) {
        (Some(row), Ok(table)) => parts.push(tape.lookup_row(table, row)?),
        (None, Err(_)) => {}
        (Some(_), Err(_)) => {
            return Err(Error::Contract("claim source given but model has no claim source table".into()))
        }
        (None, Ok(_)) => {
            return Err(Error::Contract("model expects a claim source row".into()))
        }
    }
    parts.push(tape.lookup_row(vars.get(ParamKey::ArticleSources)?, article_source)?);
    let fused = tape.concat_rows(&parts)?;

    let mut dense = |tape: &mut ModelTape<'_, T>, input: Var, w: ParamKey, b: ParamKey| -> Result<Var> {
        let z = tape.matmul(vars.get(w)?, input)?;
        let z = tape.add(z, vars.get(b)?)?;
        let a = tape.relu(z);
        match dropout.as_deref_mut() {
            Some(dr) if dr.rate > 0.0 => {
                let mask = tape.constant(dr.mask(tape.value(a).rows()));
                tape.mul(a, mask)
            }
            _ => Ok(a),
        }
    };
    let d1 = dense(tape, fused, ParamKey::FusionWeight, ParamKey::FusionBias)?;
    let d2 = dense(tape, d1, ParamKey::DenseWeight, ParamKey::DenseBias)?;

    let z = tape.matmul(vars.get(ParamKey::OutputWeight)?, d2)?;
    let logits = tape.add(z, vars.get(ParamKey::OutputBias)?)?;
    let score = match head {
        Head::Binary => tape.sigmoid(logits),
        Head::Multiclass { classes } => tape.masked_softmax(logits, &vec![true; classes.len()])?,
        Head::Regression => logits,
    };
    Ok((d1, d2, logits, score))
}

/// Records the whole per-article pass.
pub fn article_graph<'a, T: Scalar>(
    tape: &mut ModelTape<'a, T>,
    vars: &ParamVars,
    params: &ModelParams<T>,
    input: &ArticleInput<T>,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<ArticleGraph> {
    let mask = vec![true; input.tokens.cols()];
    let hidden = bilstm_graph(tape, vars, params.hyper.lstm_hidden, &input.tokens)?;
    let (attention, attention_scores) =
        attention_graph(tape, vars, &input.tokens, &input.claim_mean, &mask)?;
    let article_vector = article_vector_graph(tape, hidden, attention, &mask)?;
    let (dense1, dense2, logits, score) = score_graph(
        tape,
        vars,
        &params.hyper.head,
        article_vector,
        input.claim_source,
        input.article_source,
        dropout,
    )?;
    Ok(ArticleGraph {
        hidden,
        attention_scores,
        attention,
        article_vector,
        dense1,
        dense2,
        logits,
        score,
    })
}

impl ArticleGraph {
    pub fn trace<T: Scalar>(&self, tape: &ModelTape<'_, T>) -> ForwardTrace<T> {
        let v = |x: Var| tape.value(x).as_slice().to_vec();
        let hidden = tape.value(self.hidden).clone();
        ForwardTrace {
            mask: vec![true; hidden.cols()],
            hidden,
            attention_scores: v(self.attention_scores),
            attention: v(self.attention),
            article_vector: v(self.article_vector),
            dense1: v(self.dense1),
            dense2: v(self.dense2),
            logits: v(self.logits),
            score: v(self.score),
        }
    }
}

/// Full forward pass for one claim-article pair. Dropout is only applied
/// when `dropout` is given.
pub fn forward_article<T: Scalar>(
    params: &ModelParams<T>,
    input: &ArticleInput<T>,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<ForwardTrace<T>> {
    let mut tape = ModelTape::new();
    let vars = ParamVars::register(&mut tape, params);
    let graph = article_graph(&mut tape, &vars, params, input, dropout)?;
    Ok(graph.trace(&tape))
}

/// Encodes `d x k` word vectors into `2H x k` hidden states.
pub fn bilstm_encode<T: Scalar>(params: &ModelParams<T>, tokens: &Matrix<T>) -> Result<Matrix<T>> {
    if tokens.rows() != params.hyper.word_dim {
        return Err(Error::shape("bilstm_encode", tokens.shape(), (params.hyper.word_dim, tokens.cols())));
    }
    let mut tape = ModelTape::new();
    let vars = ParamVars::register(&mut tape, params);
    let h = bilstm_graph(&mut tape, &vars, params.hyper.lstm_hidden, tokens)?;
    Ok(tape.value(h).clone())
}

/// Claim-conditioned attention over article tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention<T> {
    pub weights: Vec<T>,
    pub scores: Vec<T>,
}

pub fn attend<T: Scalar>(
    params: &ModelParams<T>,
    tokens: &Matrix<T>,
    claim_mean: &Matrix<T>,
    mask: &[bool],
) -> Result<Attention<T>> {
    let mut tape = ModelTape::new();
    let vars = ParamVars::register(&mut tape, params);
    let (alpha, scores) = attention_graph(&mut tape, &vars, tokens, claim_mean, mask)?;
    Ok(Attention {
        weights: tape.value(alpha).as_slice().to_vec(),
        scores: tape.value(scores).as_slice().to_vec(),
    })
}

/// `g = (1/k) Σ_k α_k h_k` over unmasked positions.
pub fn article_vector<T: Scalar>(hidden: &Matrix<T>, alpha: &[T], mask: &[bool]) -> Result<Vec<T>> {
    if alpha.len() != hidden.cols() || mask.len() != hidden.cols() {
        return Err(Error::shape("article_vector", hidden.shape(), (alpha.len(), mask.len())));
    }
    let mut tape: ModelTape<'_, T> = Tape::new();
    let h = tape.constant_ref(hidden);
    let a = tape.constant(Matrix::from_vec(1, alpha.len(), alpha.to_vec())?);
    let g = article_vector_graph(&mut tape, h, a, mask)?;
    Ok(tape.value(g).as_slice().to_vec())
}

/// Scores an article representation `g` with the given source rows.
pub fn score_article<T: Scalar>(
    params: &ModelParams<T>,
    article_vector: &[T],
    claim_source: Option<usize>,
    article_source: usize,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<ForwardTrace<T>> {
    let expected = 2 * params.hyper.lstm_hidden;
    if article_vector.len() != expected {
        return Err(Error::shape("score_article", (article_vector.len(), 1), (expected, 1)));
    }
    let mut tape = ModelTape::new();
    let vars = ParamVars::register(&mut tape, params);
    let g = tape.constant(Matrix::column(article_vector.to_vec()));
    let (d1, d2, logits, score) = score_graph(
        &mut tape,
        &vars,
        &params.hyper.head,
        g,
        claim_source,
        article_source,
        dropout,
    )?;
    let v = |x: Var| tape.value(x).as_slice().to_vec();
    Ok(ForwardTrace {
        hidden: Matrix::zeros(expected, 0),
        attention_scores: Vec::new(),
        attention: Vec::new(),
        mask: Vec::new(),
        article_vector: article_vector.to_vec(),
        dense1: v(d1),
        dense2: v(d2),
        logits: v(logits),
        score: v(score),
    })
}

/// Mean of per-article scores. Scores are summed in sorted order, so the
/// result does not depend on article order.
pub fn aggregate<T: Scalar>(scores: &[T]) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::Degenerate("aggregate over zero articles".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.as_f64().total_cmp(&b.as_f64()));
    Ok(sorted.into_iter().sum::<T>() / T::lit(scores.len() as f64))
}

/// Element-wise mean of per-article score vectors (class distributions).
pub fn aggregate_vectors<T: Scalar>(scores: &[Vec<T>]) -> Result<Vec<T>> {
    let first = scores
        .first()
        .ok_or_else(|| Error::Degenerate("aggregate over zero articles".into()))?;
    (0..first.len())
        .map(|j| {
            let column = scores
                .iter()
                .map(|s| {
                    s.get(j)
                        .copied()
                        .ok_or_else(|| Error::shape("aggregate", (s.len(), 1), (first.len(), 1)))
                })
                .collect::<Result<Vec<T>>>()?;
            aggregate(&column)
        })
        .collect()
}

/// Claim-level decision derived from the aggregated credibility.
#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Credible(bool),
    Class { index: usize, name: String, confidence: f64 },
    Score(f64),
}

/// Threshold for the binary verdict.
pub const CREDIBLE_THRESHOLD: f64 = 0.5;

impl Verdict {
    pub fn from_credibility(head: &Head, cred: &[f64]) -> Result<Self> {
        match head {
            Head::Binary => Ok(Verdict::Credible(cred[0] >= CREDIBLE_THRESHOLD)),
            Head::Regression => Ok(Verdict::Score(cred[0])),
            Head::Multiclass { classes } => {
                let (index, &confidence) = cred
                    .iter()
                    .enumerate()
                    .fold(None, |best: Option<(usize, &f64)>, (i, p)| match best {
                        Some((_, bp)) if bp >= p => best,
                        _ => Some((i, p)),
                    })
                    .ok_or_else(|| Error::Degenerate("empty class distribution".into()))?;
                Ok(Verdict::Class {
                    index,
                    name: classes.get(index).cloned().unwrap_or_default(),
                    confidence,
                })
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Verdict::Credible(true) => "credible".into(),
            Verdict::Credible(false) => "not-credible".into(),
            Verdict::Class { name, .. } => name.clone(),
            Verdict::Score(s) => format!("{s}"),
        }
    }
}

/// Softmax helper for callers holding raw logits.
pub fn class_distribution<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    masked_softmax(logits, &vec![true; logits.len()])
}
