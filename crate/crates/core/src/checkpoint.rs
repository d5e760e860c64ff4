//! Bit-exact model persistence.
//!
//! Checkpoints are JSON documents. Every tensor is written as 64-bit
//! floats in shortest round-trip form, so both precisions reload to
//! identical bits.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embeddings::SourceEmbeddingTable;
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelParams, ParamKey};
use crate::numeric::{Matrix, Scalar};

pub const FORMAT: &str = "declare-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    precision: u32,
    hyper: Hyperparams,
    embeddings_fingerprint: String,
    metadata: BTreeMap<String, String>,
    claim_sources: Option<Vec<(String, usize)>>,
    article_sources: Vec<(String, usize)>,
    tensors: BTreeMap<String, Tensor>,
}

/// A model together with the identity of the embeddings it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    pub embeddings_fingerprint: String,
    /// Free-form facts such as fold, seed and best epoch.
    pub metadata: BTreeMap<String, String>,
}

fn named_rows<T: Scalar>(t: &SourceEmbeddingTable<T>) -> Vec<(String, usize)> {
    t.named_rows().map(|(n, r)| (n.to_string(), r)).collect()
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_json(&self) -> Result<String> {
        let p = &self.params;
        let tensors = p
            .keys()
            .into_iter()
            .map(|k| {
                let m = p.get(k).expect("key from params");
                let t = Tensor {
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.as_slice().iter().map(|x| x.as_f64()).collect(),
                };
                (k.to_string(), t)
            })
            .collect();
        let file = CheckpointFile {
            format: FORMAT.into(),
            version: VERSION,
            precision: T::BITS,
            hyper: p.hyper.clone(),
            embeddings_fingerprint: self.embeddings_fingerprint.clone(),
            metadata: self.metadata.clone(),
            claim_sources: p.claim_sources.as_ref().map(named_rows),
            article_sources: named_rows(&p.article_sources),
            tensors,
        };
        if !p.is_finite() {
            return Err(Error::Format("refusing to save non-finite parameters".into()));
        }
        serde_json::to_string(&file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
        if file.format != FORMAT {
            return Err(Error::Format(format!("not a checkpoint (format {:?})", file.format)));
        }
        if file.version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", file.version)));
        }
        if file.precision > T::BITS {
            return Err(Error::Format(format!(
                "{}-bit checkpoint cannot be loaded at {} bits",
                file.precision,
                T::BITS
            )));
        }
        let mut take = |key: ParamKey| -> Result<Matrix<T>> {
            let t = file
                .tensors
                .remove(&key.to_string())
                .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {key}")))?;
            Matrix::from_vec(t.rows, t.cols, t.data.into_iter().map(T::lit).collect())
                .map_err(|e| Error::Format(format!("tensor {key}: {e}")))
        };
        let claim_sources = match file.claim_sources.take() {
            Some(names) => Some(SourceEmbeddingTable::from_parts(names, take(ParamKey::ClaimSources)?)?),
            None => None,
        };
        let article_sources = SourceEmbeddingTable::from_parts(
            std::mem::take(&mut file.article_sources),
            take(ParamKey::ArticleSources)?,
        )?;
        let mut params = ModelParams::init(file.hyper.clone(), claim_sources, article_sources, 0)?;
        for key in params.keys() {
            if matches!(key, ParamKey::ClaimSources | ParamKey::ArticleSources) {
                continue;
            }
            let m = take(key)?;
            let slot = params.get_mut(key).expect("key from params");
            if slot.shape() != m.shape() {
                return Err(Error::Format(format!(
                    "tensor {key} is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    slot.rows(),
                    slot.cols()
                )));
            }
            *slot = m;
        }
        if let Some(extra) = file.tensors.keys().next() {
            return Err(Error::Format(format!("unexpected tensor {extra}")));
        }
        Ok(Checkpoint {
            params,
            embeddings_fingerprint: file.embeddings_fingerprint,
            metadata: file.metadata,
        })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Precision recorded in a checkpoint file.
pub fn checkpoint_precision(path: &Path) -> Result<u32> {
    #[derive(Deserialize)]
    struct Header {
        precision: u32,
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let h: Header = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(h.precision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::build_source_table;
    use crate::model::Head;

    fn params<T: Scalar>() -> ModelParams<T> {
        let hyper = Hyperparams {
            word_dim: 3,
            claim_source_dim: Some(2),
            article_source_dim: 2,
            lstm_hidden: 2,
            dense_size: 3,
            dropout: 0.5,
            head: Head::Binary,
        };
        let counts: BTreeMap<String, usize> = [("a.com".to_string(), 12), ("b.com".to_string(), 3)].into();
        let cs = build_source_table(&counts, 5, 2, 1).unwrap();
        let as_ = build_source_table(&counts, 10, 2, 2).unwrap();
        ModelParams::init(hyper, Some(cs), as_, 3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = Checkpoint { params: params::<f64>(), embeddings_fingerprint: "abc".into(), metadata: BTreeMap::new() };
        let back = Checkpoint::<f64>::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        let c32 = Checkpoint { params: params::<f32>(), embeddings_fingerprint: "abc".into(), metadata: BTreeMap::new() };
        assert_eq!(Checkpoint::<f32>::from_json(&c32.to_json().unwrap()).unwrap(), c32);
    }

    #[test]
    fn wider_checkpoint_refused_at_lower_precision() {
        let c = Checkpoint { params: params::<f64>(), embeddings_fingerprint: String::new(), metadata: BTreeMap::new() };
        assert!(Checkpoint::<f32>::from_json(&c.to_json().unwrap()).is_err());
    }

    #[test]
    fn garbage_is_format_error() {
        assert!(matches!(Checkpoint::<f64>::from_json("{}"), Err(Error::Format(_))));
    }
}
