use crate::error::{Error, Result};
use crate::model::{article_graph, ArticleGraph, ArticleInput, Dropout, Head, ModelParams, ModelTape, ParamKey, ParamVars};
use crate::numeric::{Gradients, Scalar, Var, PROB_CLAMP};

/// Training target of one claim, shared by all of its articles.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Binary(bool),
    Class(usize),
    Score(f64),
}

impl Target {
    fn check(&self, head: &Head) -> Result<()> {
        match (self, head) {
            (Target::Binary(_), Head::Binary) | (Target::Score(_), Head::Regression) => Ok(()),
            (Target::Class(c), Head::Multiclass { classes }) if *c < classes.len() => Ok(()),
            (Target::Class(c), Head::Multiclass { classes }) => Err(Error::Contract(format!(
                "class index {c} out of range for {} classes",
                classes.len()
            ))),
            (t, h) => Err(Error::Contract(format!("target {t:?} does not fit head {h:?}"))),
        }
    }
}

/// Data loss of one prediction: binary cross-entropy on a clamped
/// probability, cross-entropy against a class distribution, or squared
/// error.
pub fn loss<T: Scalar>(prediction: &[T], target: &Target, head: &Head) -> Result<T> {
    target.check(head)?;
    if prediction.len() != head.outputs() {
        return Err(Error::shape("loss", (prediction.len(), 1), (head.outputs(), 1)));
    }
    let lo = T::lit(PROB_CLAMP);
    let hi = T::one() - lo;
    Ok(match *target {
        Target::Binary(y) => {
            let s = prediction[0];
            if !(s >= T::zero() && s <= T::one()) {
                return Err(Error::Contract(format!("probability {s} outside [0, 1]")));
            }
            let s = s.max(lo).min(hi);
            if y {
                -s.ln()
            } else {
                -(T::one() - s).ln()
            }
        }
        Target::Class(c) => -prediction[c].max(lo).min(hi).ln(),
        Target::Score(y) => {
            let d = prediction[0] - T::lit(y);
            d * d
        }
    })
}

/// `λ Σ ‖W‖²` over the fully connected weight matrices.
pub fn l2_penalty<T: Scalar>(params: &ModelParams<T>, lambda: f64) -> T {
    let total: T = ParamKey::REGULARISED
        .iter()
        .map(|&k| params.get(k).expect("regularised key").sum_squares())
        .sum();
    T::lit(lambda) * total
}

/// Records data loss plus the L2 penalty for one claim-article pair.
pub fn instance_loss_graph<'a, T: Scalar>(
    tape: &mut ModelTape<'a, T>,
    vars: &ParamVars,
    params: &ModelParams<T>,
    input: &ArticleInput<T>,
    target: &Target,
    l2_lambda: f64,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<(Var, ArticleGraph)> {
    let head = &params.hyper.head;
    target.check(head)?;
    let graph = article_graph(tape, vars, params, input, dropout)?;
    let data = match *target {
        Target::Binary(y) => tape.binary_cross_entropy(graph.score, if y { T::one() } else { T::zero() })?,
        Target::Class(c) => {
            let onehot: Vec<T> = (0..head.outputs())
                .map(|i| if i == c { T::one() } else { T::zero() })
                .collect();
            tape.softmax_cross_entropy(graph.logits, &onehot)?
        }
        Target::Score(y) => tape.squared_error(graph.score, T::lit(y))?,
    };
    if l2_lambda == 0.0 {
        return Ok((data, graph));
    }
    let mut total = data;
    for key in ParamKey::REGULARISED {
        let sq = tape.sum_squares(vars.get(key)?);
        let term = tape.scale(sq, T::lit(l2_lambda));
        total = tape.add(total, term)?;
    }
    Ok((total, graph))
}

/// Loss and parameter gradients of one claim-article pair.
pub fn instance_gradients<T: Scalar>(
    params: &ModelParams<T>,
    input: &ArticleInput<T>,
    target: &Target,
    l2_lambda: f64,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<(T, Gradients<T, ParamKey>)> {
    let mut tape = ModelTape::new();
    let vars = ParamVars::register(&mut tape, params);
    let (loss, _) = instance_loss_graph(&mut tape, &vars, params, input, target, l2_lambda, dropout)?;
    let value = tape.scalar(loss);
    Ok((value, tape.backward(loss)?))
}

/// Loss of one claim-article pair without dropout.
pub fn instance_loss<T: Scalar>(
    params: &ModelParams<T>,
    input: &ArticleInput<T>,
    target: &Target,
    l2_lambda: f64,
) -> Result<T> {
    let mut tape = ModelTape::new();
    let vars = ParamVars::register(&mut tape, params);
    let (loss, _) = instance_loss_graph(&mut tape, &vars, params, input, target, l2_lambda, None)?;
    Ok(tape.scalar(loss))
}
