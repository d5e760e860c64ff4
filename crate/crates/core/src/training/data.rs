use rayon::prelude::*;

use super::loss::Target;
use crate::corpus::{map_politifact_label, ClaimInstance, Label};
use crate::embeddings::{claim_mean, WordEmbeddings};
use crate::error::{Error, Result};
use crate::metrics::{classification_report, multiclass_report, regression_report, MetricReport};
use crate::model::{aggregate_vectors, forward_article, ArticleInput, Head, ModelParams, Verdict};
use crate::numeric::{Matrix, Scalar};

/// Converts a corpus label into a target for `head`.
pub fn target_for(label: &Label, head: &Head) -> Result<Target> {
    let bad = || Error::Contract(format!("label {label:?} does not fit head {head:?}"));
    match (head, label) {
        (Head::Binary, Label::Binary(b)) => Ok(Target::Binary(*b)),
        (Head::Binary, Label::Category(s)) => match s.as_str() {
            "credible" => Ok(Target::Binary(true)),
            "not credible" | "not-credible" => Ok(Target::Binary(false)),
            _ => map_politifact_label(s).map(Target::Binary).map_err(|_| bad()),
        },
        (Head::Multiclass { classes }, Label::Category(s)) => {
            classes.iter().position(|c| c == s).map(Target::Class).ok_or_else(bad)
        }
        (Head::Multiclass { classes }, Label::Binary(b)) => {
            let name = if *b { "true" } else { "false" };
            classes.iter().position(|c| c == name).map(Target::Class).ok_or_else(bad)
        }
        (Head::Regression, Label::Score(x)) => Ok(Target::Score(*x)),
        _ => Err(bad()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedArticle {
    pub token_ids: Vec<Option<usize>>,
    pub article_source: usize,
}

/// A claim resolved against embeddings and source tables.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedClaim<T> {
    pub id: String,
    pub claim_mean: Matrix<T>,
    pub claim_source: Option<usize>,
    pub articles: Vec<EncodedArticle>,
    pub target: Option<Target>,
}

impl<T: Scalar> EncodedClaim<T> {
    pub fn input(&self, article: usize, emb: &WordEmbeddings) -> ArticleInput<T> {
        let a = &self.articles[article];
        ArticleInput {
            tokens: emb.embed_ids(&a.token_ids),
            claim_mean: self.claim_mean.clone(),
            claim_source: self.claim_source,
            article_source: a.article_source,
        }
    }

    fn require_target(&self) -> Result<&Target> {
        self.target
            .as_ref()
            .ok_or_else(|| Error::Record { id: self.id.clone(), message: "claim has no label".into() })
    }
}

/// Encodes claims for `params`. Labels are converted when present; a label
/// that does not fit the head is an error.
pub fn encode_claims<T: Scalar>(
    instances: &[ClaimInstance],
    emb: &WordEmbeddings,
    params: &ModelParams<T>,
) -> Result<Vec<EncodedClaim<T>>> {
    instances
        .iter()
        .map(|inst| {
            let record = |e: Error| Error::Record { id: inst.id.clone(), message: e.to_string() };
            if inst.articles.is_empty() {
                return Err(record(Error::Degenerate("claim has no articles".into())));
            }
            let mean = claim_mean(&inst.claim, emb).map_err(record)?;
            let target = inst
                .label
                .as_ref()
                .map(|l| target_for(l, &params.hyper.head))
                .transpose()
                .map_err(record)?;
            Ok(EncodedClaim {
                id: inst.id.clone(),
                claim_mean: Matrix::column(mean.into_iter().map(T::lit).collect()),
                claim_source: params
                    .claim_sources
                    .as_ref()
                    .map(|t| t.resolve(inst.claim_source.as_deref())),
                articles: inst
                    .articles
                    .iter()
                    .map(|a| EncodedArticle {
                        token_ids: emb.token_ids(&a.tokens),
                        article_source: params.article_sources.resolve(Some(&a.source)),
                    })
                    .collect(),
                target,
            })
        })
        .collect()
}

/// Model output for one claim.
#[derive(Clone, Debug, PartialEq)]
pub struct ClaimPrediction {
    pub id: String,
    /// Per-article outputs (probability, class distribution or score).
    pub article_scores: Vec<Vec<f64>>,
    /// Mean of the article outputs.
    pub credibility: Vec<f64>,
    pub verdict: Verdict,
}

/// Scores every article of every claim without dropout.
pub fn predict_claims<T: Scalar>(
    params: &ModelParams<T>,
    claims: &[EncodedClaim<T>],
    emb: &WordEmbeddings,
) -> Result<Vec<ClaimPrediction>> {
    claims
        .par_iter()
        .map(|claim| {
            let article_scores = (0..claim.articles.len())
                .map(|i| {
                    let trace = forward_article(params, &claim.input(i, emb), None)?;
                    Ok(trace.score.iter().map(|s| s.as_f64()).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            let credibility = aggregate_vectors(&article_scores)?;
            let verdict = Verdict::from_credibility(&params.hyper.head, &credibility)?;
            Ok(ClaimPrediction {
                id: claim.id.clone(),
                article_scores,
                credibility,
                verdict,
            })
        })
        .collect()
}

/// Metric report of `predictions` against the targets of `claims`.
pub fn evaluate<T: Scalar>(
    head: &Head,
    predictions: &[ClaimPrediction],
    claims: &[EncodedClaim<T>],
) -> Result<MetricReport> {
    if predictions.len() != claims.len() {
        return Err(Error::shape("evaluate", (predictions.len(), 1), (claims.len(), 1)));
    }
    let targets = claims
        .iter()
        .map(EncodedClaim::require_target)
        .collect::<Result<Vec<_>>>()?;
    match head {
        Head::Binary => {
            let labels = targets
                .iter()
                .map(|t| match t {
                    Target::Binary(b) => Ok(*b),
                    other => Err(Error::Contract(format!("{other:?} is not a binary target"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let scores: Vec<f64> = predictions.iter().map(|p| p.credibility[0]).collect();
            classification_report(&scores, &labels)
        }
        Head::Multiclass { classes } => {
            let labels = targets
                .iter()
                .map(|t| match t {
                    Target::Class(c) => Ok(*c),
                    other => Err(Error::Contract(format!("{other:?} is not a class target"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let dists: Vec<Vec<f64>> = predictions.iter().map(|p| p.credibility.clone()).collect();
            multiclass_report(&dists, &labels, classes)
        }
        Head::Regression => {
            let ys = targets
                .iter()
                .map(|t| match t {
                    Target::Score(y) => Ok(*y),
                    other => Err(Error::Contract(format!("{other:?} is not a score target"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let preds: Vec<f64> = predictions.iter().map(|p| p.credibility[0]).collect();
            regression_report(&preds, &ys)
        }
    }
}
