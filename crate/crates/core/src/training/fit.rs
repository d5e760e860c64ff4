use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, OptimizerState};
use super::config::{Setup, TrainConfig};
use super::data::{encode_claims, evaluate, predict_claims, EncodedClaim};
use super::loss::{instance_gradients, loss};
use crate::corpus::{source_counts, ClaimInstance, FoldPlan};
use crate::embeddings::{build_source_table, WordEmbeddings};
use crate::error::{Error, Result};
use crate::metrics::{Auc, MetricReport};
use crate::model::{Dropout, Head, ModelParams, ParamKey};
use crate::numeric::{Gradients, Scalar};

/// Mixes seed components into one RNG seed (SplitMix64 finaliser).
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x9E37_79B9_7F4A_7C15u64, |acc, &p| {
        let mut z = acc ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(acc << 6);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss over the epoch's pairs, penalty included.
    pub train_loss: f64,
    /// Mean per-article data loss on the validation claims.
    pub validation_loss: f64,
    pub validation_metric: f64,
    pub improved: bool,
}

impl std::fmt::Display for EpochLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "epoch {:>3}  train_loss {:.6}  val_loss {:.6}  val_metric {:.6}{}",
            self.epoch,
            self.train_loss,
            self.validation_loss,
            self.validation_metric,
            if self.improved { "  *" } else { "" }
        )
    }
}

/// Result of one training run.
#[derive(Clone, Debug)]
pub struct FitOutcome<T> {
    /// Parameters of the best validation epoch.
    pub params: ModelParams<T>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub history: Vec<EpochLog>,
}

/// Model-selection metric: AUC for binary heads (macro accuracy when AUC
/// is undefined), macro F1 for multiclass heads, MSE for regression.
pub fn selection_metric(head: &Head, report: &MetricReport) -> f64 {
    match head {
        Head::Binary => match report.auc {
            Some(Auc::Value(v)) => v,
            _ => report.macro_accuracy.unwrap_or(0.0),
        },
        Head::Multiclass { .. } => report.macro_f1.unwrap_or(0.0),
        Head::Regression => report.mse.unwrap_or(f64::INFINITY),
    }
}

/// True when `(metric, loss)` beats `best`: a better metric, or an equal
/// metric with lower validation loss.
fn improves(head: &Head, metric: f64, loss: f64, best: Option<(f64, f64)>) -> bool {
    let Some((best_metric, best_loss)) = best else { return true };
    let ord = match head {
        Head::Regression => best_metric.partial_cmp(&metric),
        _ => metric.partial_cmp(&best_metric),
    };
    match ord {
        Some(Ordering::Greater) => true,
        Some(Ordering::Equal) => loss < best_loss,
        _ => false,
    }
}

fn pairs<T>(claims: &[EncodedClaim<T>]) -> Vec<(usize, usize)> {
    claims
        .iter()
        .enumerate()
        .flat_map(|(c, claim)| (0..claim.articles.len()).map(move |a| (c, a)))
        .collect()
}

fn validation_loss<T: Scalar>(
    head: &Head,
    claims: &[EncodedClaim<T>],
    predictions: &[super::data::ClaimPrediction],
) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (claim, pred) in claims.iter().zip(predictions) {
        let target = claim
            .target
            .as_ref()
            .ok_or_else(|| Error::Record { id: claim.id.clone(), message: "claim has no label".into() })?;
        for s in &pred.article_scores {
            total += loss(s, target, head)?;
            n += 1;
        }
    }
    Ok(total / n.max(1) as f64)
}

/// Averaged loss and gradients of one batch. Each pair draws its dropout
/// masks from a generator seeded by `(seed, stream, epoch, position)`, and
/// per-pair results are summed in batch order, so the outcome does not
/// depend on thread scheduling.
fn batch_gradients<T: Scalar>(
    params: &ModelParams<T>,
    claims: &[EncodedClaim<T>],
    emb: &WordEmbeddings,
    batch: &[(usize, (usize, usize))],
    config: &TrainConfig,
    stream: u64,
    epoch: usize,
) -> Result<(f64, Gradients<T, ParamKey>)> {
    let rate = params.hyper.dropout;
    let results = batch
        .par_iter()
        .map(|&(position, (c, a))| {
            let claim = &claims[c];
            let target = claim
                .target
                .as_ref()
                .ok_or_else(|| Error::Record { id: claim.id.clone(), message: "claim has no label".into() })?;
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, stream, epoch as u64, position as u64]));
            let mut dropout = Dropout { rate, rng: &mut rng };
            instance_gradients(params, &claim.input(a, emb), target, config.l2_lambda, Some(&mut dropout))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Gradients::new();
    let mut loss_sum = 0.0;
    for (l, g) in results {
        loss_sum += l.as_f64();
        total.merge(g)?;
    }
    let n = batch.len() as f64;
    total.scale(T::lit(1.0 / n));
    Ok((loss_sum / n, total))
}

/// Trains `params` on `train`, selecting the epoch with the best validation
/// metric. `stream` separates the random streams of concurrent runs that
/// share a seed.
pub fn fit<T: Scalar>(
    mut params: ModelParams<T>,
    train: &[EncodedClaim<T>],
    validation: &[EncodedClaim<T>],
    emb: &WordEmbeddings,
    config: &TrainConfig,
    stream: u64,
    on_epoch: &(dyn Fn(&EpochLog) + Sync),
) -> Result<FitOutcome<T>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Degenerate("empty training set".into()));
    }
    if validation.is_empty() {
        return Err(Error::Degenerate("empty validation set".into()));
    }
    let head = params.hyper.head.clone();
    let mut order = pairs(train);
    let mut state = OptimizerState::new();
    let mut best: Option<(f64, f64)> = None;
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, stream, epoch as u64]));
        order.shuffle(&mut rng);
        let indexed: Vec<(usize, (usize, usize))> = order.iter().copied().enumerate().collect();
        let mut loss_sum = 0.0;
        for batch in indexed.chunks(config.batch_size) {
            let (l, grads) = batch_gradients(&params, train, emb, batch, config, stream, epoch)?;
            if !l.is_finite() {
                return Err(Error::Degenerate(format!("non-finite training loss in epoch {epoch}")));
            }
            loss_sum += l * batch.len() as f64;
            adam_step(&mut params, &grads, &mut state, config)?;
        }
        if !params.is_finite() {
            return Err(Error::Degenerate(format!("non-finite parameters after epoch {epoch}")));
        }
        let predictions = predict_claims(&params, validation, emb)?;
        let report = evaluate(&head, &predictions, validation)?;
        let metric = selection_metric(&head, &report);
        let val_loss = validation_loss(&head, validation, &predictions)?;
        let improved = improves(&head, metric, val_loss, best);
        if improved {
            best = Some((metric, val_loss));
            best_params = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            validation_loss: val_loss,
            validation_metric: metric,
            improved,
        };
        on_epoch(&log);
        history.push(log);
        if since_best >= config.patience {
            break;
        }
    }
    Ok(FitOutcome {
        params: best_params,
        best_epoch,
        best_metric: best.map_or(f64::NAN, |b| b.0),
        history,
    })
}

/// Outcome of one cross-validation fold.
#[derive(Clone, Debug)]
pub struct FoldOutcome<T> {
    pub fold: usize,
    pub params: ModelParams<T>,
    /// Metrics on the held-out fold (on the validation claims when the plan
    /// has a single fold).
    pub report: MetricReport,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
}

/// Initial parameters for a corpus: source tables from the corpus counts
/// and dense weights from `seed`.
pub fn init_params<T: Scalar>(instances: &[ClaimInstance], setup: &Setup, seed: u64) -> Result<ModelParams<T>> {
    let (claim_counts, article_counts) = source_counts(instances);
    let claim_sources = setup
        .hyper
        .claim_source_dim
        .map(|d| build_source_table(&claim_counts, setup.claim_min_support, d, derive_seed(&[seed, 1])))
        .transpose()?;
    let article_sources = build_source_table(
        &article_counts,
        setup.article_min_support,
        setup.hyper.article_source_dim,
        derive_seed(&[seed, 2]),
    )?;
    ModelParams::init(setup.hyper.clone(), claim_sources, article_sources, derive_seed(&[seed, 3]))
}

/// Cross-validated training. For each fold, a model is trained on the
/// remaining folds, early-stopped on the plan's validation claims and
/// evaluated on the fold. Folds run in parallel.
pub fn train<T: Scalar>(
    instances: &[ClaimInstance],
    plan: &FoldPlan,
    emb: &WordEmbeddings,
    setup: &Setup,
    on_epoch: &(dyn Fn(usize, &EpochLog) + Sync),
) -> Result<Vec<FoldOutcome<T>>> {
    setup.validate()?;
    if setup.hyper.word_dim != emb.dim() {
        return Err(Error::Contract(format!(
            "word_dim {} does not match the {}-dimensional embeddings",
            setup.hyper.word_dim,
            emb.dim()
        )));
    }
    if plan.folds.is_empty() || plan.folds.iter().any(|f| f.is_empty()) {
        return Err(Error::Degenerate("fold plan has an empty fold".into()));
    }
    // row assignment of the source tables does not depend on the seed
    let layout = init_params::<T>(instances, setup, setup.train.seed)?;
    let encoded = encode_claims(instances, emb, &layout)?;
    let by_id: std::collections::HashMap<&str, usize> =
        encoded.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
    let select = |ids: &[String]| -> Result<Vec<EncodedClaim<T>>> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|&i| encoded[i].clone())
                    .ok_or_else(|| Error::Contract(format!("fold plan names unknown claim {id:?}")))
            })
            .collect()
    };
    let validation = select(&plan.validation)?;
    (0..plan.num_folds())
        .into_par_iter()
        .map(|fold| {
            let (train_set, test_set) = if plan.num_folds() == 1 {
                (select(&plan.folds[0])?, validation.clone())
            } else {
                let train_ids: Vec<String> = plan
                    .folds
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != fold)
                    .flat_map(|(_, f)| f.iter().cloned())
                    .collect();
                (select(&train_ids)?, select(&plan.folds[fold])?)
            };
            let start = init_params::<T>(instances, setup, derive_seed(&[setup.train.seed, fold as u64]))?;
            let log = |l: &EpochLog| on_epoch(fold, l);
            let outcome = fit(start, &train_set, &validation, emb, &setup.train, fold as u64, &log)?;
            let predictions = predict_claims(&outcome.params, &test_set, emb)?;
            let report = evaluate(&setup.hyper.head, &predictions, &test_set)?;
            Ok(FoldOutcome {
                fold,
                params: outcome.params,
                report,
                best_epoch: outcome.best_epoch,
                history: outcome.history,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_rule() {
        assert!(improves(&Head::Binary, 0.5, 1.0, None));
        assert!(improves(&Head::Binary, 0.6, 9.0, Some((0.5, 1.0))));
        assert!(improves(&Head::Binary, 0.5, 0.9, Some((0.5, 1.0))));
        assert!(!improves(&Head::Binary, 0.4, 0.1, Some((0.5, 1.0))));
        assert!(improves(&Head::Regression, 0.4, 9.0, Some((0.5, 1.0))));
        assert!(!improves(&Head::Regression, 0.6, 0.1, Some((0.5, 1.0))));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(&[1, 0]), derive_seed(&[0, 1]));
        assert_eq!(derive_seed(&[5, 6, 7]), derive_seed(&[5, 6, 7]));
    }
}
