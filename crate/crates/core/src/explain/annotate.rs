use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForwardTrace, Verdict};
use crate::numeric::Scalar;

/// Number of shade levels used when rendering attention.
pub const SHADE_LEVELS: u8 = 5;

/// Attention over one article snippet, ready for rendering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionAnnotation {
    pub claim_id: String,
    pub claim: String,
    pub article_source: String,
    pub verdict: String,
    pub tokens: Vec<String>,
    pub weights: Vec<f64>,
    /// Quantile bucket of each weight, `0..SHADE_LEVELS`.
    pub levels: Vec<u8>,
}

/// Bucket of each weight by rank: the fraction of weights strictly below
/// it, scaled to the top level. Equal weights share a bucket.
pub fn shade_levels(weights: &[f64]) -> Vec<u8> {
    let n = weights.len();
    let top = SHADE_LEVELS - 1;
    if n == 1 {
        return vec![top];
    }
    weights
        .iter()
        .map(|&w| {
            let below = weights.iter().filter(|&&x| x < w).count();
            (top as usize * below / (n - 1)) as u8
        })
        .collect()
}

pub fn annotate<T: Scalar>(
    trace: &ForwardTrace<T>,
    tokens: &[String],
    verdict: &Verdict,
    claim_id: &str,
    claim: &str,
    article_source: &str,
) -> Result<AttentionAnnotation> {
    if trace.attention.len() != tokens.len() {
        return Err(Error::Contract(format!(
            "trace has {} attention weights for {} tokens",
            trace.attention.len(),
            tokens.len()
        )));
    }
    if tokens.is_empty() {
        return Err(Error::Contract("cannot annotate an empty snippet".into()));
    }
    let weights: Vec<f64> = trace.attention.iter().map(|w| w.as_f64()).collect();
    Ok(AttentionAnnotation {
        claim_id: claim_id.to_string(),
        claim: claim.to_string(),
        article_source: article_source.to_string(),
        verdict: verdict.label(),
        tokens: tokens.to_vec(),
        levels: shade_levels(&weights),
        weights,
    })
}
