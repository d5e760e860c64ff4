use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fit::derive_seed;
use super::loss::{instance_gradients, instance_loss, Target};
use crate::embeddings::{build_source_table, SourceEmbeddingTable};
use crate::error::{Error, Result};
use crate::model::{ArticleInput, Head, Hyperparams, ModelParams, ParamKey};
use crate::numeric::Matrix;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// A model and a single claim-article pair small enough to probe densely.
#[derive(Clone, Debug)]
pub struct TinyInstance {
    pub params: ModelParams<f64>,
    pub input: ArticleInput<f64>,
    pub target: Target,
    pub l2_lambda: f64,
}

/// `d = 4`, `H = 3`, `F = 3`, one 2-token article, claim and article
/// sources of width 2 with three rows each. Biases are randomised.
pub fn tiny_instance(head: Head, seed: u64) -> Result<TinyInstance> {
    let hyper = Hyperparams {
        word_dim: 4,
        claim_source_dim: Some(2),
        article_source_dim: 2,
        lstm_hidden: 3,
        dense_size: 3,
        dropout: 0.0,
        head: head.clone(),
    };
    let counts: BTreeMap<String, usize> = [("a".to_string(), 1), ("b".to_string(), 1)].into();
    let table = |s| -> Result<SourceEmbeddingTable<f64>> {
        let mut t = build_source_table(&counts, 1, 2, derive_seed(&[seed, s]))?;
        t.vectors = t.vectors.scale(10.0);
        Ok(t)
    };
    let mut params = ModelParams::init(hyper, Some(table(1)?), table(2)?, derive_seed(&[seed, 3]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 4]));
    // zero biases can put a dead layer's successor exactly on the ReLU kink
    for key in params.keys() {
        if key.is_bias() {
            for b in params.get_mut(key).expect("key from params").as_mut_slice() {
                *b += rng.gen_range(-0.5..0.5);
            }
        }
    }
    let mut draw = |r, c| Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    let input = ArticleInput {
        tokens: draw(4, 2),
        claim_mean: draw(4, 1),
        claim_source: Some(1),
        article_source: 2,
    };
    let target = match head {
        Head::Binary => Target::Binary(true),
        Head::Multiclass { .. } => Target::Class(1),
        Head::Regression => Target::Score(0.7),
    };
    Ok(TinyInstance {
        params,
        input,
        target,
        l2_lambda: 1e-2,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub key: ParamKey,
    pub probes: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub loss: f64,
    pub groups: Vec<GroupError>,
    pub max_rel_error: f64,
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares analytic gradients against central differences at
/// `probes_per_group` random entries of every parameter tensor. Rows of a
/// source table used by the instance are always probed in full.
pub fn gradient_check(instance: &TinyInstance, probes_per_group: usize, seed: u64) -> Result<GradCheckReport> {
    gradient_check_with(instance, probes_per_group, seed, &|_, _| {})
}

/// As [`gradient_check`], with `tamper` applied to each analytic gradient
/// before comparison.
pub fn gradient_check_with(
    instance: &TinyInstance,
    probes_per_group: usize,
    seed: u64,
    tamper: &dyn Fn(ParamKey, &mut Matrix<f64>),
) -> Result<GradCheckReport> {
    let TinyInstance { params, input, target, l2_lambda } = instance;
    let (loss, grads) = instance_gradients(params, input, target, *l2_lambda, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = Vec::new();
    for key in params.keys() {
        let value = params.get(key).expect("key from params");
        let mut analytic = grads
            .get(key)
            .cloned()
            .ok_or_else(|| Error::Contract(format!("no gradient for {key}")))?;
        tamper(key, &mut analytic);
        let (rows, cols) = value.shape();
        let mut entries: Vec<(usize, usize)> = (0..probes_per_group)
            .map(|_| (rng.gen_range(0..rows), rng.gen_range(0..cols)))
            .collect();
        let used_row = match key {
            ParamKey::ClaimSources => input.claim_source,
            ParamKey::ArticleSources => Some(input.article_source),
            _ => None,
        };
        if let Some(r) = used_row {
            entries.extend((0..cols).map(|c| (r, c)));
        }
        let mut worst: f64 = 0.0;
        for &(r, c) in &entries {
            let mut probe = params.clone();
            let at = |p: &mut ModelParams<f64>, delta: f64| {
                let m = p.get_mut(key).expect("key from params");
                m.set(r, c, value.get(r, c) + delta);
            };
            at(&mut probe, FD_STEP);
            let plus = instance_loss(&probe, input, target, *l2_lambda)?;
            at(&mut probe, -FD_STEP);
            let minus = instance_loss(&probe, input, target, *l2_lambda)?;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic.get(r, c), numeric));
        }
        groups.push(GroupError {
            key,
            probes: entries.len(),
            max_rel_error: worst,
        });
    }
    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { loss, groups, max_rel_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_tiny_instance_passes() {
        let inst = tiny_instance(Head::Binary, 1).unwrap();
        let report = gradient_check(&inst, 8, 2).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:#?}");
        assert_eq!(report.groups.len(), inst.params.keys().len());
    }

    #[test]
    fn other_heads_pass() {
        let classes = vec!["true".into(), "false".into(), "unverified".into()];
        for head in [Head::Regression, Head::Multiclass { classes }] {
            let inst = tiny_instance(head, 3).unwrap();
            let report = gradient_check(&inst, 8, 4).unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:#?}");
        }
    }

    #[test]
    fn doubled_gradient_is_detected() {
        let inst = tiny_instance(Head::Binary, 1).unwrap();
        let report = gradient_check_with(&inst, 8, 2, &|k, g| {
            if k == ParamKey::DenseWeight {
                *g = g.scale(2.0);
            }
        })
        .unwrap();
        assert!(report.max_rel_error > 0.3);
    }

    #[test]
    fn repeated_checks_agree() {
        let inst = tiny_instance(Head::Binary, 5).unwrap();
        let a = gradient_check(&inst, 4, 9).unwrap();
        let b = gradient_check(&inst, 4, 9).unwrap();
        for (x, y) in a.groups.iter().zip(&b.groups) {
            assert!((x.max_rel_error - y.max_rel_error).abs() <= 1e-12);
        }
    }
}
