use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use crate::embeddings::SourceEmbeddingTable;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Scalar};

/// Initial value of the LSTM forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

/// What the network predicts per article.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// Credible vs. not credible; a single sigmoid output.
    Binary,
    /// Softmax over named classes (e.g. true / false / unverified).
    Multiclass { classes: Vec<String> },
    /// Unbounded linear score (e.g. a 1-5 rating).
    Regression,
}

impl Head {
    pub fn outputs(&self) -> usize {
        match self {
            Head::Binary | Head::Regression => 1,
            Head::Multiclass { classes } => classes.len(),
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self, Head::Regression)
    }
}

/// Layer sizes and regularisation for one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub word_dim: usize,
    /// `None` when the dataset has no claim sources.
    pub claim_source_dim: Option<usize>,
    pub article_source_dim: usize,
    /// LSTM hidden size for each direction.
    pub lstm_hidden: usize,
    /// Width of both fully connected layers.
    pub dense_size: usize,
    pub dropout: f64,
    pub head: Head,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("article_source_dim", self.article_source_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("dense_size", self.dense_size),
            ("claim_source_dim", self.claim_source_dim.unwrap_or(1)),
            ("head outputs", self.head.outputs()),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Contract(format!("{name} must be >= 1")));
        }
        if let Head::Multiclass { classes } = &self.head {
            if classes.len() < 2 {
                return Err(Error::Contract("multiclass head needs at least 2 classes".into()));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Contract(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Length of `g ⊕ cs ⊕ as`.
    pub fn fusion_input(&self) -> usize {
        2 * self.lstm_hidden + self.claim_source_dim.unwrap_or(0) + self.article_source_dim
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Forward,
    Backward,
}

/// LSTM gates, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Cell,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Cell];

    fn index(self) -> usize {
        self as usize
    }

    fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Cell => "cell",
        }
    }
}

/// Identifies one trainable tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKey {
    LstmWeight(Direction, Gate),
    LstmBias(Direction, Gate),
    AttentionWeight,
    AttentionBias,
    FusionWeight,
    FusionBias,
    DenseWeight,
    DenseBias,
    OutputWeight,
    OutputBias,
    ClaimSources,
    ArticleSources,
}

impl ParamKey {
    /// Weights of the fully connected layers, the ones L2 applies to.
    pub const REGULARISED: [ParamKey; 3] = [
        ParamKey::FusionWeight,
        ParamKey::DenseWeight,
        ParamKey::OutputWeight,
    ];

    pub fn is_bias(self) -> bool {
        matches!(
            self,
            ParamKey::LstmBias(..)
                | ParamKey::AttentionBias
                | ParamKey::FusionBias
                | ParamKey::DenseBias
                | ParamKey::OutputBias
        )
    }
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dir = |d: &Direction| match d {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        };
        match self {
            ParamKey::LstmWeight(d, g) => write!(f, "lstm.{}.{}.weight", dir(d), g.name()),
            ParamKey::LstmBias(d, g) => write!(f, "lstm.{}.{}.bias", dir(d), g.name()),
            ParamKey::AttentionWeight => f.write_str("attention.weight"),
            ParamKey::AttentionBias => f.write_str("attention.bias"),
            ParamKey::FusionWeight => f.write_str("fusion.weight"),
            ParamKey::FusionBias => f.write_str("fusion.bias"),
            ParamKey::DenseWeight => f.write_str("dense.weight"),
            ParamKey::DenseBias => f.write_str("dense.bias"),
            ParamKey::OutputWeight => f.write_str("output.weight"),
            ParamKey::OutputBias => f.write_str("output.bias"),
            ParamKey::ClaimSources => f.write_str("sources.claim"),
            ParamKey::ArticleSources => f.write_str("sources.article"),
        }
    }
}

impl FromStr for ParamKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelParamsLayout::all_keys(true)
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Format(format!("unknown parameter name {s:?}")))
    }
}

/// Gate weights `W ∈ R^{H×(d+H)}` and biases `b ∈ R^H` for one direction.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<T> {
    pub weights: [Matrix<T>; 4],
    pub biases: [Matrix<T>; 4],
}

impl<T: Scalar> LstmParams<T> {
    pub fn weight(&self, gate: Gate) -> &Matrix<T> {
        &self.weights[gate.index()]
    }

    pub fn bias(&self, gate: Gate) -> &Matrix<T> {
        &self.biases[gate.index()]
    }

    fn init(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let weights = Gate::ALL.map(|_| glorot_uniform(hidden, input + hidden, rng));
        let biases = Gate::ALL.map(|g| {
            let b = if g == Gate::Forget { FORGET_BIAS } else { 0.0 };
            Matrix::filled(hidden, 1, T::lit(b))
        });
        LstmParams { weights, biases }
    }
}

/// Every trainable tensor of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub hyper: Hyperparams,
    pub forward: LstmParams<T>,
    pub backward: LstmParams<T>,
    /// `1 x 2d`: scores `a_k ⊕ c̄` to a scalar.
    pub attention_weight: Matrix<T>,
    pub attention_bias: Matrix<T>,
    pub fusion_weight: Matrix<T>,
    pub fusion_bias: Matrix<T>,
    pub dense_weight: Matrix<T>,
    pub dense_bias: Matrix<T>,
    pub output_weight: Matrix<T>,
    pub output_bias: Matrix<T>,
    pub claim_sources: Option<SourceEmbeddingTable<T>>,
    pub article_sources: SourceEmbeddingTable<T>,
}

struct ModelParamsLayout;

impl ModelParamsLayout {
    fn all_keys(with_claim_sources: bool) -> Vec<ParamKey> {
        let mut keys = Vec::new();
        for dir in [Direction::Forward, Direction::Backward] {
            for g in Gate::ALL {
                keys.push(ParamKey::LstmWeight(dir, g));
                keys.push(ParamKey::LstmBias(dir, g));
            }
        }
        keys.extend([
            ParamKey::AttentionWeight,
            ParamKey::AttentionBias,
            ParamKey::FusionWeight,
            ParamKey::FusionBias,
            ParamKey::DenseWeight,
            ParamKey::DenseBias,
            ParamKey::OutputWeight,
            ParamKey::OutputBias,
        ]);
        if with_claim_sources {
            keys.push(ParamKey::ClaimSources);
        }
        keys.push(ParamKey::ArticleSources);
        keys
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Initialises every dense tensor from `seed` (Glorot uniform weights,
    /// zero biases, forget-gate bias 1). Source tables are taken as given.
    pub fn init(
        hyper: Hyperparams,
        claim_sources: Option<SourceEmbeddingTable<T>>,
        article_sources: SourceEmbeddingTable<T>,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        match (&hyper.claim_source_dim, &claim_sources) {
            (Some(d), Some(t)) if t.dim() == *d => {}
            (None, None) => {}
            _ => {
                return Err(Error::Contract(
                    "claim source table does not match claim_source_dim".into(),
                ))
            }
        }
        if article_sources.dim() != hyper.article_source_dim {
            return Err(Error::Contract(
                "article source table does not match article_source_dim".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, h, f, k) = (
            hyper.word_dim,
            hyper.lstm_hidden,
            hyper.dense_size,
            hyper.head.outputs(),
        );
        let forward = LstmParams::init(d, h, &mut rng);
        let backward = LstmParams::init(d, h, &mut rng);
        let attention_weight = glorot_uniform(1, 2 * d, &mut rng);
        let fusion_weight = glorot_uniform(f, hyper.fusion_input(), &mut rng);
        let dense_weight = glorot_uniform(f, f, &mut rng);
        let output_weight = glorot_uniform(k, f, &mut rng);
        Ok(ModelParams {
            forward,
            backward,
            attention_weight,
            attention_bias: Matrix::zeros(1, 1),
            fusion_weight,
            fusion_bias: Matrix::zeros(f, 1),
            dense_weight,
            dense_bias: Matrix::zeros(f, 1),
            output_weight,
            output_bias: Matrix::zeros(k, 1),
            claim_sources,
            article_sources,
            hyper,
        })
    }

    /// Parameter keys in a fixed order.
    pub fn keys(&self) -> Vec<ParamKey> {
        ModelParamsLayout::all_keys(self.claim_sources.is_some())
    }

    pub fn lstm(&self, dir: Direction) -> &LstmParams<T> {
        match dir {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    fn lstm_mut(&mut self, dir: Direction) -> &mut LstmParams<T> {
        match dir {
            Direction::Forward => &mut self.forward,
            Direction::Backward => &mut self.backward,
        }
    }

    pub fn get(&self, key: ParamKey) -> Option<&Matrix<T>> {
        Some(match key {
            ParamKey::LstmWeight(d, g) => self.lstm(d).weight(g),
            ParamKey::LstmBias(d, g) => self.lstm(d).bias(g),
            ParamKey::AttentionWeight => &self.attention_weight,
            ParamKey::AttentionBias => &self.attention_bias,
            ParamKey::FusionWeight => &self.fusion_weight,
            ParamKey::FusionBias => &self.fusion_bias,
            ParamKey::DenseWeight => &self.dense_weight,
            ParamKey::DenseBias => &self.dense_bias,
            ParamKey::OutputWeight => &self.output_weight,
            ParamKey::OutputBias => &self.output_bias,
            ParamKey::ClaimSources => &self.claim_sources.as_ref()?.vectors,
            ParamKey::ArticleSources => &self.article_sources.vectors,
        })
    }

    pub fn get_mut(&mut self, key: ParamKey) -> Option<&mut Matrix<T>> {
        Some(match key {
            ParamKey::LstmWeight(d, g) => &mut self.lstm_mut(d).weights[g.index()],
            ParamKey::LstmBias(d, g) => &mut self.lstm_mut(d).biases[g.index()],
            ParamKey::AttentionWeight => &mut self.attention_weight,
            ParamKey::AttentionBias => &mut self.attention_bias,
            ParamKey::FusionWeight => &mut self.fusion_weight,
            ParamKey::FusionBias => &mut self.fusion_bias,
            ParamKey::DenseWeight => &mut self.dense_weight,
            ParamKey::DenseBias => &mut self.dense_bias,
            ParamKey::OutputWeight => &mut self.output_weight,
            ParamKey::OutputBias => &mut self.output_bias,
            ParamKey::ClaimSources => &mut self.claim_sources.as_mut()?.vectors,
            ParamKey::ArticleSources => &mut self.article_sources.vectors,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.keys()
            .into_iter()
            .all(|k| self.get(k).is_some_and(Matrix::is_finite))
    }

    pub fn parameter_count(&self) -> usize {
        self.keys().into_iter().filter_map(|k| self.get(k)).map(Matrix::len).sum()
    }
}
