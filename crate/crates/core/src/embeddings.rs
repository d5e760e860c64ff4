//! Frozen word vectors and trainable source embedding tables.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::init;
use crate::numeric::{Matrix, Scalar};

/// Lowercases, splits on whitespace and strips leading/trailing punctuation.
/// Tokens that are pure punctuation are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| c.is_ascii_punctuation() || is_unicode_punct(c))
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2013}' | '\u{2014}' | '\u{2026}'
            | '\u{00AB}' | '\u{00BB}'
    )
}

/// Token to row mapping. Indices are dense from 0 in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn insert(&mut self, token: String) -> Option<usize> {
        if self.index.contains_key(&token) {
            return None;
        }
        let id = self.tokens.len();
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        Some(id)
    }
}

/// Pre-trained word vectors. Never updated by training; tokens missing from
/// the vocabulary embed as the zero vector.
#[derive(Clone, Debug, PartialEq)]
pub struct WordEmbeddings {
    vocab: Vocabulary,
    dim: usize,
    vectors: Vec<f64>,
    zero: Vec<f64>,
}

impl WordEmbeddings {
    /// Builds a table from `(token, vector)` pairs; duplicate tokens keep the
    /// first vector.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::default();
        let mut vectors = Vec::new();
        let mut dim = None;
        for (i, (token, v)) in pairs.into_iter().enumerate() {
            let d = *dim.get_or_insert(v.len());
            if v.len() != d || d == 0 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {d} components, found {}", v.len()),
                });
            }
            if vocab.insert(token.into()).is_some() {
                vectors.extend_from_slice(&v);
            }
        }
        let dim = dim.ok_or_else(|| Error::EmptyInput("no word vectors".into()))?;
        Ok(WordEmbeddings {
            vocab,
            dim,
            vectors,
            zero: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vocab.get(token).is_some()
    }

    /// Vector for `token`, or the zero vector when out of vocabulary.
    pub fn lookup(&self, token: &str) -> &[f64] {
        match self.vocab.get(token) {
            Some(i) => &self.vectors[i * self.dim..(i + 1) * self.dim],
            None => &self.zero,
        }
    }

    /// Embeds a token sequence as a `dim x len` matrix, one column per token.
    pub fn embed_sequence<T: Scalar>(&self, tokens: &[String]) -> Matrix<T> {
        Matrix::from_fn(self.dim, tokens.len(), |r, c| T::lit(self.lookup(&tokens[c])[r]))
    }

    /// Vocabulary indices of `tokens`, `None` for out-of-vocabulary ones.
    pub fn token_ids(&self, tokens: &[String]) -> Vec<Option<usize>> {
        tokens.iter().map(|t| self.vocab.get(t)).collect()
    }

    /// Like [`embed_sequence`](Self::embed_sequence) for pre-resolved indices.
    pub fn embed_ids<T: Scalar>(&self, ids: &[Option<usize>]) -> Matrix<T> {
        Matrix::from_fn(self.dim, ids.len(), |r, c| match ids[c] {
            Some(i) => T::lit(self.vectors[i * self.dim + r]),
            None => T::zero(),
        })
    }

    /// Keeps only the tokens for which `keep` returns true, preserving order.
    pub fn retain(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let pairs = self
            .vocab
            .tokens()
            .iter()
            .filter(|t| keep(t))
            .map(|t| (t.clone(), self.lookup(t).to_vec()))
            .collect::<Vec<_>>();
        let mut out = WordEmbeddings {
            vocab: Vocabulary::default(),
            dim: self.dim,
            vectors: Vec::new(),
            zero: vec![0.0; self.dim],
        };
        for (t, v) in pairs {
            out.vocab.insert(t);
            out.vectors.extend_from_slice(&v);
        }
        out
    }

    /// SHA-256 over the dimension, tokens and exact vector bits. Checkpoints
    /// record it so a model is never paired with different embeddings.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for (i, t) in self.vocab.tokens().iter().enumerate() {
            h.update(t.as_bytes());
            h.update([0u8]);
            for v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Reads GloVe text vectors: `<token> <f1> ... <fd>` per line, no header.
pub fn load_word_vectors(path: &Path, vocab_limit: Option<usize>) -> Result<WordEmbeddings> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_word_vectors(BufReader::new(file), vocab_limit).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_word_vectors<R: BufRead>(reader: R, vocab_limit: Option<usize>) -> Result<WordEmbeddings> {
    let mut pairs = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        if vocab_limit.is_some_and(|limit| pairs.len() >= limit) {
            break;
        }
        let line = line.map_err(|e| Error::io("<word vectors>", e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: format!("invalid number {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected || expected == 0 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected {expected} components, found {}", values.len()),
            });
        }
        pairs.push((token.to_string(), values));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("word vector file has no entries".into()));
    }
    WordEmbeddings::from_pairs(pairs)
}

/// Mean of the claim's word vectors. Out-of-vocabulary tokens contribute
/// zero vectors but still count in the denominator.
pub fn claim_mean(tokens: &[String], emb: &WordEmbeddings) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::Degenerate("claim has no tokens".into()));
    }
    let mut sum = vec![0.0; emb.dim()];
    for t in tokens {
        for (s, v) in sum.iter_mut().zip(emb.lookup(t)) {
            *s += v;
        }
    }
    let l = tokens.len() as f64;
    Ok(sum.into_iter().map(|s| s / l).collect())
}

/// Trainable embeddings for claim or article sources. Sources seen fewer
/// than `min_support` times, and sources never seen, share the dummy row.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceEmbeddingTable<T> {
    index: BTreeMap<String, usize>,
    dummy: usize,
    pub vectors: Matrix<T>,
}

/// Row of the shared bucket for rare and unknown sources.
pub const DUMMY_ROW: usize = 0;

impl<T: Scalar> SourceEmbeddingTable<T> {
    /// Rebuilds a table from named rows (used when loading checkpoints).
    pub fn from_parts(names: Vec<(String, usize)>, vectors: Matrix<T>) -> Result<Self> {
        for (name, row) in &names {
            if *row >= vectors.rows() {
                return Err(Error::Format(format!(
                    "source {name:?} points at row {row} of a {}-row table",
                    vectors.rows()
                )));
            }
        }
        Ok(SourceEmbeddingTable {
            index: names.into_iter().collect(),
            dummy: DUMMY_ROW,
            vectors,
        })
    }

    /// Row for `name`; unknown or missing names resolve to the dummy row.
    pub fn resolve(&self, name: Option<&str>) -> usize {
        name.and_then(|n| self.index.get(n).copied())
            .unwrap_or(self.dummy)
    }

    pub fn dummy_row(&self) -> usize {
        self.dummy
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn rows(&self) -> usize {
        self.vectors.rows()
    }

    /// Sources with their own row, in name order.
    pub fn named_rows(&self) -> impl Iterator<Item = (&str, usize)> {
        self.index.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn vector(&self, row: usize) -> &[T] {
        self.vectors.row(row)
    }
}

/// Assigns rows to sources meeting `min_support` (in name order, after the
/// dummy row) and initialises all rows from `seed`.
pub fn build_source_table<T: Scalar>(
    counts: &BTreeMap<String, usize>,
    min_support: usize,
    dim: usize,
    seed: u64,
) -> Result<SourceEmbeddingTable<T>> {
    if dim == 0 {
        return Err(Error::Contract("source embedding dimension must be >= 1".into()));
    }
    let mut index = BTreeMap::new();
    let mut next = DUMMY_ROW + 1;
    for (name, &count) in counts {
        if count >= min_support {
            index.insert(name.clone(), next);
            next += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = init::embedding_uniform(next, dim, &mut rng);
    Ok(SourceEmbeddingTable {
        index,
        dummy: DUMMY_ROW,
        vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> WordEmbeddings {
        read_word_vectors(
            "the 0.1 0.2 0.3 0.4\ncat 1 2 3 4\nsat -1 0.5 0 2\n".as_bytes(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn three_line_file() {
        let emb = toy();
        assert_eq!(emb.len(), 3);
        assert_eq!(emb.dim(), 4);
        assert_eq!(emb.lookup("cat"), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(emb.vocabulary().get("sat"), Some(2));
    }

    #[test]
    fn values_are_kept_exactly() {
        let emb = toy();
        assert_eq!(emb.lookup("the")[0], "0.1".parse::<f64>().unwrap());
    }

    #[test]
    fn oov_is_zero() {
        assert_eq!(toy().lookup("dog"), &[0.0; 4]);
    }

    #[test]
    fn ragged_line_reports_line_number() {
        let err = read_word_vectors("a 1 2\nb 1 2 3\n".as_bytes(), None).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_input() {
        assert!(matches!(
            read_word_vectors("".as_bytes(), None),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn vocab_limit_truncates() {
        let emb = read_word_vectors("a 1\nb 2\nc 3\n".as_bytes(), Some(2)).unwrap();
        assert_eq!(emb.len(), 2);
    }

    #[test]
    fn tokenizer_folds_case_and_strips_punctuation() {
        assert_eq!(
            tokenize("Obama said, \"NO!\" -- it's (true)."),
            vec!["obama", "said", "no", "it's", "true"]
        );
    }

    #[test]
    fn claim_mean_single_token() {
        let emb = toy();
        assert_eq!(claim_mean(&["cat".into()], &emb).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn claim_mean_opposite_vectors_cancel() {
        let emb = WordEmbeddings::from_pairs([("x", vec![1.0, -2.0]), ("y", vec![-1.0, 2.0])]).unwrap();
        assert_eq!(claim_mean(&["x".into(), "y".into()], &emb).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn claim_mean_counts_oov_in_denominator() {
        let emb = toy();
        let m = claim_mean(&["cat".into(), "zzz".into()], &emb).unwrap();
        assert_eq!(m, vec![0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn claim_mean_five_tokens_matches_direct_sum() {
        let emb = toy();
        let toks: Vec<String> = ["the", "cat", "sat", "the", "dog"].iter().map(|s| s.to_string()).collect();
        let m = claim_mean(&toks, &emb).unwrap();
        for (j, mj) in m.iter().enumerate() {
            let direct = (emb.lookup("the")[j] * 2.0 + emb.lookup("cat")[j] + emb.lookup("sat")[j]) / 5.0;
            assert!((mj - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_claim_is_degenerate() {
        assert!(matches!(claim_mean(&[], &toy()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rare_sources_share_dummy_row() {
        let counts: BTreeMap<String, usize> =
            [("a", 7), ("b", 2), ("c", 1), ("d", 4), ("e", 5)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let t = build_source_table::<f64>(&counts, 5, 3, 1).unwrap();
        assert_ne!(t.resolve(Some("a")), t.dummy_row());
        assert_ne!(t.resolve(Some("e")), t.dummy_row());
        for s in ["b", "c", "d"] {
            assert_eq!(t.resolve(Some(s)), t.dummy_row());
        }
        assert_eq!(t.resolve(Some("never seen")), t.dummy_row());
        assert_eq!(t.resolve(None), t.dummy_row());
        assert_eq!(t.rows(), 3);
    }

    #[test]
    fn min_support_one_assigns_every_source() {
        let counts: BTreeMap<String, usize> = [("a", 1), ("b", 2)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let t = build_source_table::<f64>(&counts, 1, 2, 1).unwrap();
        assert!(counts.keys().all(|k| t.resolve(Some(k)) != t.dummy_row()));
    }

    #[test]
    fn zero_dim_source_table_rejected() {
        assert!(build_source_table::<f64>(&BTreeMap::new(), 1, 0, 1).is_err());
    }
}
