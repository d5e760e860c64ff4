use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{ARTICLE_MIN_SUPPORT, CLAIM_MIN_SUPPORT};
use crate::error::{Error, Result};
use crate::model::{Head, Hyperparams};

/// Floating-point width used for parameters and activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    #[serde(rename = "32")]
    F32,
    #[serde(rename = "64")]
    F64,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "32" => Ok(Precision::F32),
            "64" => Ok(Precision::F64),
            other => Err(Error::Usage(format!("precision must be 32 or 64, got {other:?}"))),
        }
    }
}

/// Optimiser and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Weight of the squared-norm penalty on the fully connected weights.
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2_lambda: 1e-4,
            batch_size: 64,
            max_epochs: 100,
            patience: 5,
            seed: 42,
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Contract(format!("learning_rate {} must be > 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Contract("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Contract("adam betas must lie in [0, 1)".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 || self.l2_lambda.is_nan() || self.l2_lambda < 0.0 {
            return Err(Error::Contract("epsilon must be > 0 and l2_lambda >= 0".into()));
        }
        Ok(())
    }
}

/// Per-dataset settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Snopes,
    PolitiFact,
    NewsTrust,
    SemEval,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Snopes, Preset::PolitiFact, Preset::NewsTrust, Preset::SemEval];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Snopes => "snopes",
            Preset::PolitiFact => "politifact",
            Preset::NewsTrust => "newstrust",
            Preset::SemEval => "semeval",
        }
    }

    pub fn hyper(self) -> Hyperparams {
        let (word_dim, claim_source_dim, article_source_dim, lstm_hidden, dense_size, dropout, head) =
            match self {
                Preset::Snopes => (100, None, 8, 64, 32, 0.5, Head::Binary),
                Preset::PolitiFact => (100, Some(4), 4, 64, 32, 0.5, Head::Binary),
                Preset::NewsTrust => (300, Some(8), 8, 64, 64, 0.3, Head::Regression),
                Preset::SemEval => (
                    100,
                    Some(4),
                    4,
                    16,
                    8,
                    0.3,
                    Head::Multiclass {
                        classes: ["true", "false", "unverified"].map(String::from).to_vec(),
                    },
                ),
            };
        Hyperparams {
            word_dim,
            claim_source_dim,
            article_source_dim,
            lstm_hidden,
            dense_size,
            dropout,
            head,
        }
    }

    /// `(claim sources, article sources)` minimum support.
    pub fn min_support(self) -> (usize, usize) {
        match self {
            Preset::SemEval => (CLAIM_MIN_SUPPORT, 5),
            _ => (CLAIM_MIN_SUPPORT, ARTICLE_MIN_SUPPORT),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown preset {s:?} (expected snopes, politifact, newstrust or semeval)"
                ))
            })
    }
}

/// Everything needed to train on a corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct Setup {
    pub hyper: Hyperparams,
    pub train: TrainConfig,
    pub claim_min_support: usize,
    pub article_min_support: usize,
}

impl Setup {
    pub fn from_preset(preset: Preset) -> Self {
        let (claim_min_support, article_min_support) = preset.min_support();
        Setup {
            hyper: preset.hyper(),
            train: TrainConfig::default(),
            claim_min_support,
            article_min_support,
        }
    }

    /// Applies the overrides of a config file on top of this setup.
    pub fn apply(&mut self, file: &ConfigFile) -> Result<()> {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = file.$field.clone() { $target = v; })*
            };
        }
        set! {
            word_dim => self.hyper.word_dim,
            article_source_dim => self.hyper.article_source_dim,
            lstm_hidden => self.hyper.lstm_hidden,
            dense_size => self.hyper.dense_size,
            dropout => self.hyper.dropout,
            learning_rate => self.train.learning_rate,
            beta1 => self.train.beta1,
            beta2 => self.train.beta2,
            epsilon => self.train.epsilon,
            l2_lambda => self.train.l2_lambda,
            batch_size => self.train.batch_size,
            max_epochs => self.train.max_epochs,
            patience => self.train.patience,
            seed => self.train.seed,
            precision => self.train.precision,
            claim_min_support => self.claim_min_support,
            article_min_support => self.article_min_support,
        }
        if let Some(d) = file.claim_source_dim {
            self.hyper.claim_source_dim = (d > 0).then_some(d);
        }
        if let Some(classes) = &file.classes {
            self.hyper.head = Head::Multiclass { classes: classes.clone() };
        }
        if let Some(head) = &file.head {
            self.hyper.head = match (head.as_str(), &self.hyper.head) {
                ("binary", _) => Head::Binary,
                ("regression", _) => Head::Regression,
                ("multiclass", Head::Multiclass { .. }) => self.hyper.head.clone(),
                ("multiclass", _) => {
                    return Err(Error::Usage("multiclass head needs a `classes` list".into()))
                }
                (other, _) => return Err(Error::Usage(format!("unknown head {other:?}"))),
            };
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.train.validate()
    }
}

/// TOML training config. Every key is optional; `preset` selects the base
/// values the remaining keys override.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub word_dim: Option<usize>,
    /// 0 disables the claim source embedding.
    pub claim_source_dim: Option<usize>,
    pub article_source_dim: Option<usize>,
    pub lstm_hidden: Option<usize>,
    pub dense_size: Option<usize>,
    pub dropout: Option<f64>,
    pub head: Option<String>,
    pub classes: Option<Vec<String>>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub l2_lambda: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub precision: Option<Precision>,
    pub claim_min_support: Option<usize>,
    pub article_min_support: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// Resolves the setup: `preset_override`, else the file's preset, else
    /// Snopes, with the file's keys applied on top.
    pub fn resolve(&self, preset_override: Option<Preset>) -> Result<Setup> {
        let preset = match (preset_override, &self.preset) {
            (Some(p), _) => p,
            (None, Some(name)) => name.parse()?,
            (None, None) => Preset::Snopes,
        };
        let mut setup = Setup::from_preset(preset);
        setup.apply(self)?;
        Ok(setup)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snopes_preset_values() {
        let h = Preset::Snopes.hyper();
        assert_eq!(h.word_dim, 100);
        assert_eq!(h.claim_source_dim, None);
        assert_eq!(h.article_source_dim, 8);
        assert_eq!((h.lstm_hidden, h.dense_size), (64, 32));
        assert_eq!(h.dropout, 0.5);
        assert_eq!(Preset::Snopes.min_support(), (5, 10));
    }

    #[test]
    fn semeval_preset_values() {
        let h = Preset::SemEval.hyper();
        assert_eq!((h.lstm_hidden, h.dense_size, h.dropout), (16, 8, 0.3));
        assert_eq!(h.head.outputs(), 3);
        assert_eq!(Preset::SemEval.min_support(), (5, 5));
    }

    #[test]
    fn config_file_names_preset_and_overrides() {
        let file = ConfigFile::parse("preset = \"newstrust\"\nseed = 7\nprecision = \"32\"\n").unwrap();
        let setup = file.resolve(None).unwrap();
        assert_eq!(setup.hyper, Preset::NewsTrust.hyper());
        assert_eq!(setup.train.seed, 7);
        assert_eq!(setup.train.precision, Precision::F32);
        assert_eq!(setup.train.learning_rate, 0.002);
    }

    #[test]
    fn unknown_config_key_rejected() {
        assert!(ConfigFile::parse("learning_rat = 0.1").is_err());
        assert!(ConfigFile::parse("preset = \"nope\"").unwrap().resolve(None).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let file = ConfigFile::parse("batch_size = 0").unwrap();
        assert!(file.resolve(None).is_err());
        let file = ConfigFile::parse("learning_rate = -1.0").unwrap();
        assert!(file.resolve(None).is_err());
    }
}
