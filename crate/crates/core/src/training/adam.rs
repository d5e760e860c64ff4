use std::collections::BTreeMap;

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamKey};
use crate::numeric::{Gradients, Matrix, Scalar};

/// Adam moment accumulators and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T, K = ParamKey> {
    step: u64,
    moments: BTreeMap<K, (Matrix<T>, Matrix<T>)>,
}

impl<T: Scalar, K: Copy + Ord> Default for OptimizerState<T, K> {
    fn default() -> Self {
        OptimizerState {
            step: 0,
            moments: BTreeMap::new(),
        }
    }
}

impl<T: Scalar, K: Copy + Ord> OptimizerState<T, K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// First and second moments of `key`, once it has been updated.
    pub fn moments(&self, key: K) -> Option<(&Matrix<T>, &Matrix<T>)> {
        self.moments.get(&key).map(|(m, v)| (m, v))
    }

    /// Starts a new timestep; call once before the updates of one step.
    pub fn tick(&mut self) {
        self.step += 1;
    }

    /// Bias-corrected update of a single tensor at the current timestep.
    pub fn update(&mut self, key: K, param: &mut Matrix<T>, grad: &Matrix<T>, config: &TrainConfig) -> Result<()> {
        if param.shape() != grad.shape() {
            return Err(Error::Contract(format!(
                "gradient shape {:?} does not match parameter shape {:?}",
                grad.shape(),
                param.shape()
            )));
        }
        if self.step == 0 {
            return Err(Error::Contract("adam update before the first tick".into()));
        }
        let (rows, cols) = param.shape();
        let (m, v) = self
            .moments
            .entry(key)
            .or_insert_with(|| (Matrix::zeros(rows, cols), Matrix::zeros(rows, cols)));
        if m.shape() != param.shape() {
            return Err(Error::Contract("optimizer state shaped unlike its parameter".into()));
        }
        let b1 = T::lit(config.beta1);
        let b2 = T::lit(config.beta2);
        let one = T::one();
        let t = self.step as i32;
        let c1 = one - b1.powi(t);
        let c2 = one - b2.powi(t);
        let lr = T::lit(config.learning_rate);
        let eps = T::lit(config.epsilon);
        let (m, v) = (m.as_mut_slice(), v.as_mut_slice());
        for (((p, &g), m), v) in param.as_mut_slice().iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// One Adam step over every trainable tensor. Keys absent from `grads`
/// receive a zero gradient. Word embeddings are not model parameters and
/// are never touched.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T, ParamKey>,
    state: &mut OptimizerState<T>,
    config: &TrainConfig,
) -> Result<()> {
    for (key, g) in grads.iter() {
        match params.get(key) {
            Some(p) if p.shape() == g.shape() => {}
            Some(p) => {
                return Err(Error::Contract(format!(
                    "gradient for {key} shaped {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )))
            }
            None => return Err(Error::Contract(format!("gradient for unknown parameter {key}"))),
        }
    }
    state.tick();
    for key in params.keys() {
        let param = params.get_mut(key).expect("key from params");
        let zero;
        let g = match grads.get(key) {
            Some(g) => g,
            None => {
                zero = Matrix::zeros(param.rows(), param.cols());
                &zero
            }
        };
        state.update(key, param, g, config)?;
    }
    Ok(())
}
