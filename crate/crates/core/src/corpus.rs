//! Claim/article ingestion, snippet extraction, label mapping and
//! cross-validation folds.
//!
//! The corpus file holds one JSON object per line:
//!
//! ```text
//! {"id": "c1", "claim": "...", "claim_source": "speaker" | null,
//!  "label": true | "half true" | 3.5,
//!  "articles": [{"text": "...", "source": "example.com"}, ...]}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::embeddings::{claim_mean, tokenize, WordEmbeddings};
use crate::error::{Error, Result};

/// Snippet window length in tokens.
pub const SNIPPET_LEN: usize = 100;
/// Minimum relevance for a snippet to be kept.
pub const DEFAULT_DELTA: f64 = 0.5;
/// Windows whose relevance is within this distance of the best are treated
/// as tied; the earliest one wins.
pub const TIE_TOLERANCE: f64 = 1e-10;
/// Number of cross-validation folds.
pub const DEFAULT_FOLDS: usize = 10;
/// Claim sources below this many claims share the dummy embedding.
pub const CLAIM_MIN_SUPPORT: usize = 5;
/// Article sources below this many articles share the dummy embedding.
pub const ARTICLE_MIN_SUPPORT: usize = 10;

/// Ground truth attached to a claim.
#[derive(Clone, Debug, PartialEq)]
pub enum Label {
    Binary(bool),
    /// A textual rating or class name, lowercased.
    Category(String),
    /// A real-valued credibility score.
    Score(f64),
}

impl Label {
    fn from_json(v: &Value) -> Option<Label> {
        match v {
            Value::Bool(b) => Some(Label::Binary(*b)),
            Value::Number(n) => n.as_f64().map(Label::Score),
            Value::String(s) => Some(Label::Category(s.trim().to_lowercase())),
            _ => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Label::Binary(b) => json!(b),
            Label::Category(s) => json!(s),
            Label::Score(x) => json!(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Article {
    pub text: String,
    pub tokens: Vec<String>,
    pub source: String,
}

impl Article {
    pub fn new(text: impl Into<String>, source: impl Into<String>) -> Self {
        let text = text.into();
        Article {
            tokens: tokenize(&text),
            text,
            source: source.into(),
        }
    }
}

/// One claim with its reporting articles.
#[derive(Clone, Debug, PartialEq)]
pub struct ClaimInstance {
    pub id: String,
    pub claim_text: String,
    pub claim: Vec<String>,
    pub claim_source: Option<String>,
    pub articles: Vec<Article>,
    pub label: Option<Label>,
}

impl ClaimInstance {
    pub fn new(
        id: impl Into<String>,
        claim_text: impl Into<String>,
        claim_source: Option<String>,
        articles: Vec<Article>,
        label: Option<Label>,
    ) -> Self {
        let claim_text = claim_text.into();
        ClaimInstance {
            id: id.into(),
            claim: tokenize(&claim_text),
            claim_text,
            claim_source,
            articles,
            label,
        }
    }
}

/// Result of reading a corpus file.
#[derive(Clone, Debug, Default)]
pub struct IngestReport {
    pub instances: Vec<ClaimInstance>,
    /// Records dropped because no article had any tokens.
    pub skipped: usize,
}

/// Reads a corpus file. Files ending in `.tsv` use the tab-separated
/// one-article-per-row layout, everything else JSON lines.
pub fn ingest(path: &Path) -> Result<IngestReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv")) {
        ingest_tsv_reader(reader)
    } else {
        ingest_reader(reader)
    };
    parsed.map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn ingest_reader<R: BufRead>(reader: R) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let instance = parse_record(&value, lineno + 1)?;
        if !seen.insert(instance.id.clone()) {
            return Err(Error::Record {
                id: instance.id,
                message: "duplicate claim id".into(),
            });
        }
        if instance.articles.is_empty() {
            report.skipped += 1;
        } else {
            report.instances.push(instance);
        }
    }
    Ok(report)
}

/// Reads rows of `label, claim id, claim, claim source, article, article
/// source`, one article per row. Rows of one claim are grouped by id in
/// order of first appearance; an empty or `nan` claim source means none.
pub fn ingest_tsv_reader<R: BufRead>(reader: R) -> Result<IngestReport> {
    let mut order: Vec<ClaimInstance> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut report = IngestReport::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 6 tab-separated fields, found {}", fields.len()),
            });
        }
        let [label, id, claim, claim_source, text, source] =
            [0, 1, 2, 3, 4, 5].map(|i| fields[i].trim());
        let claim_source = match claim_source {
            "" | "nan" | "NaN" => None,
            s => Some(s.to_string()),
        };
        let label = Label::Category(label.to_lowercase());
        let slot = match index.get(id) {
            Some(&i) => {
                let existing = &order[i];
                if existing.claim_text != claim || existing.label.as_ref() != Some(&label) {
                    return Err(Error::Record {
                        id: id.to_string(),
                        message: format!("line {}: claim text or label differs between rows", lineno + 1),
                    });
                }
                i
            }
            None => {
                let inst = ClaimInstance::new(id, claim, claim_source, Vec::new(), Some(label));
                if inst.claim.is_empty() {
                    return Err(Error::Record { id: id.to_string(), message: "claim has no tokens".into() });
                }
                index.insert(id.to_string(), order.len());
                order.push(inst);
                order.len() - 1
            }
        };
        let article = Article::new(text, source);
        if !article.tokens.is_empty() {
            order[slot].articles.push(article);
        }
    }
    for inst in order {
        if inst.articles.is_empty() {
            report.skipped += 1;
        } else {
            report.instances.push(inst);
        }
    }
    Ok(report)
}

fn parse_record(v: &Value, line: usize) -> Result<ClaimInstance> {
    let id = match v.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => {
            return Err(Error::Record {
                id: format!("line {line}"),
                message: "missing field `id`".into(),
            })
        }
    };
    let err = |message: &str| Error::Record {
        id: id.clone(),
        message: message.to_string(),
    };
    let claim_text = v
        .get("claim")
        .and_then(Value::as_str)
        .ok_or_else(|| err("missing field `claim`"))?;
    let claim_source = match v.get("claim_source") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(err("`claim_source` must be a string or null")),
    };
    let label = match v.get("label") {
        None | Some(Value::Null) => None,
        Some(l) => Some(Label::from_json(l).ok_or_else(|| err("unsupported `label` value"))?),
    };
    let raw_articles = v
        .get("articles")
        .and_then(Value::as_array)
        .ok_or_else(|| err("missing field `articles`"))?;
    let mut articles = Vec::with_capacity(raw_articles.len());
    for a in raw_articles {
        let text = a
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| err("article missing `text`"))?;
        let source = a
            .get("source")
            .and_then(Value::as_str)
            .ok_or_else(|| err("article missing `source`"))?;
        let article = Article::new(text, source);
        if !article.tokens.is_empty() {
            articles.push(article);
        }
    }
    let instance = ClaimInstance::new(id.clone(), claim_text, claim_source, articles, label);
    if instance.claim.is_empty() {
        return Err(err("claim has no tokens"));
    }
    Ok(instance)
}

/// Writes instances back in the corpus format.
pub fn write_corpus<W: Write>(instances: &[ClaimInstance], mut out: W) -> Result<()> {
    for inst in instances {
        let record = json!({
            "id": inst.id,
            "claim": inst.claim_text,
            "claim_source": inst.claim_source,
            "label": inst.label.as_ref().map(Label::to_json),
            "articles": inst.articles.iter().map(|a| json!({"text": a.text, "source": a.source})).collect::<Vec<_>>(),
        });
        writeln!(out, "{record}").map_err(|e| Error::io("<corpus output>", e))?;
    }
    Ok(())
}

/// Reads a blocklist: one source name per line, `#` starts a comment.
pub fn read_blocklist<R: BufRead>(reader: R) -> Result<HashSet<String>> {
    let mut out = HashSet::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<blocklist>", e))?;
        let name = line.split('#').next().unwrap_or("").trim().to_lowercase();
        if !name.is_empty() {
            out.insert(name);
        }
    }
    Ok(out)
}

/// Removes articles whose source is blocklisted (case-insensitive) and then
/// claims left without articles. Returns the number of removed articles.
pub fn apply_blocklist(instances: &mut Vec<ClaimInstance>, blocked: &HashSet<String>) -> usize {
    let mut removed = 0;
    for inst in instances.iter_mut() {
        let before = inst.articles.len();
        inst.articles
            .retain(|a| !blocked.contains(&a.source.to_lowercase()));
        removed += before - inst.articles.len();
    }
    instances.retain(|i| !i.articles.is_empty());
    removed
}

/// Claims per claim source and articles per article source.
pub fn source_counts(instances: &[ClaimInstance]) -> (BTreeMap<String, usize>, BTreeMap<String, usize>) {
    let mut claims = BTreeMap::new();
    let mut articles = BTreeMap::new();
    for inst in instances {
        if let Some(cs) = &inst.claim_source {
            *claims.entry(cs.clone()).or_insert(0) += 1;
        }
        for a in &inst.articles {
            *articles.entry(a.source.clone()).or_insert(0) += 1;
        }
    }
    (claims, articles)
}

/// Relevance of a snippet to a claim.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnippetScore {
    /// Fraction of distinct claim words present in the snippet.
    pub sim_bow: f64,
    /// Cosine between the mean claim and mean snippet word vectors.
    pub sim_semantic: f64,
    /// `sim_bow * sim_semantic`.
    pub sim: f64,
}

impl SnippetScore {
    fn new(sim_bow: f64, sim_semantic: f64) -> Self {
        SnippetScore {
            sim_bow,
            sim_semantic,
            sim: sim_bow * sim_semantic,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snippet {
    pub start: usize,
    pub tokens: Vec<String>,
    pub score: SnippetScore,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Most relevant `SNIPPET_LEN`-token window of `article`, or `None` when
/// even the best window scores below `delta`.
pub fn extract_snippet(
    claim: &[String],
    article: &[String],
    emb: &WordEmbeddings,
    delta: f64,
) -> Option<Snippet> {
    extract_snippet_with_len(claim, article, emb, delta, SNIPPET_LEN)
}

/// As [`extract_snippet`] with an explicit window length. Windows slide by
/// one token; near-ties go to the earliest window.
pub fn extract_snippet_with_len(
    claim: &[String],
    article: &[String],
    emb: &WordEmbeddings,
    delta: f64,
    window: usize,
) -> Option<Snippet> {
    if article.is_empty() || window == 0 {
        return None;
    }
    let claim_vec = claim_mean(claim, emb).ok()?;
    let claim_types: HashSet<&str> = claim.iter().map(String::as_str).collect();
    let w = window.min(article.len());
    let d = emb.dim();

    let mut sum = vec![0.0; d];
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut present = 0usize;
    let add = |tok: &str, sign: f64, sum: &mut Vec<f64>| {
        for (s, v) in sum.iter_mut().zip(emb.lookup(tok)) {
            *s += sign * v;
        }
    };
    for tok in &article[..w] {
        add(tok, 1.0, &mut sum);
        if claim_types.contains(tok.as_str()) {
            let c = counts.entry(tok).or_insert(0);
            if *c == 0 {
                present += 1;
            }
            *c += 1;
        }
    }

    let n_types = claim_types.len() as f64;
    let mut sims = Vec::with_capacity(article.len() - w + 1);
    for start in 0..=article.len() - w {
        if start > 0 {
            let out = article[start - 1].as_str();
            let inn = article[start + w - 1].as_str();
            add(out, -1.0, &mut sum);
            add(inn, 1.0, &mut sum);
            if let Some(c) = counts.get_mut(out) {
                *c -= 1;
                if *c == 0 {
                    present -= 1;
                }
            }
            if claim_types.contains(inn) {
                let c = counts.entry(inn).or_insert(0);
                if *c == 0 {
                    present += 1;
                }
                *c += 1;
            }
        }
        sims.push(SnippetScore::new(present as f64 / n_types, cosine(&claim_vec, &sum)));
    }

    let best = sims.iter().map(|s| s.sim).fold(f64::NEG_INFINITY, f64::max);
    let start = sims.iter().position(|s| s.sim >= best - TIE_TOLERANCE)?;
    let score = sims[start];
    if score.sim < delta {
        return None;
    }
    Some(Snippet {
        start,
        tokens: article[start..start + w].to_vec(),
        score,
    })
}

/// Replaces every article by its best snippet, dropping articles with no
/// snippet above `delta` and claims left with no articles. Returns the
/// number of dropped articles.
pub fn extract_snippets(
    instances: &mut Vec<ClaimInstance>,
    emb: &WordEmbeddings,
    delta: f64,
) -> usize {
    let mut dropped = 0;
    for inst in instances.iter_mut() {
        let claim = inst.claim.clone();
        let before = inst.articles.len();
        inst.articles = std::mem::take(&mut inst.articles)
            .into_iter()
            .filter_map(|a| {
                extract_snippet(&claim, &a.tokens, emb, delta).map(|s| Article {
                    text: s.tokens.join(" "),
                    tokens: s.tokens,
                    source: a.source,
                })
            })
            .collect();
        dropped += before - inst.articles.len();
    }
    instances.retain(|i| !i.articles.is_empty());
    dropped
}

/// Collapses the six-level fact-check rating scale to binary credibility:
/// true / mostly true / half true are credible, the rest are not.
pub fn map_politifact_label(rating: &str) -> Result<bool> {
    let norm = rating
        .trim()
        .to_lowercase()
        .replace(['-', '_'], " ");
    match norm.split_whitespace().collect::<Vec<_>>().join(" ").as_str() {
        "true" | "mostly true" | "half true" => Ok(true),
        "mostly false" | "false" | "pants on fire" => Ok(false),
        _ => Err(Error::Parse {
            line: 0,
            message: format!("unknown rating {rating:?}"),
        }),
    }
}

/// Held-out validation ids plus a partition of the rest into folds.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldPlan {
    pub validation: Vec<String>,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|x| x == id))
    }

    /// Fold index for every non-validation id.
    pub fn assignment(&self) -> BTreeMap<String, usize> {
        self.folds
            .iter()
            .enumerate()
            .flat_map(|(i, f)| f.iter().map(move |id| (id.clone(), i)))
            .collect()
    }

    pub fn num_folds(&self) -> usize {
        self.folds.len()
    }
}

/// Seeded shuffle; the first `n / 10` ids become the validation set and the
/// rest are dealt round-robin into `num_folds` folds.
pub fn make_folds(ids: &[String], num_folds: usize, seed: u64) -> Result<FoldPlan> {
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::Contract("claim ids must be unique".into()));
    }
    if num_folds == 0 {
        return Err(Error::Contract("need at least one fold".into()));
    }
    let n_val = ids.len() / 10;
    if n_val == 0 || ids.len() - n_val < num_folds {
        return Err(Error::Degenerate(format!(
            "{} instances are too few for a validation split and {num_folds} folds",
            ids.len()
        )));
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let rest = order.split_off(n_val);
    let mut folds = vec![Vec::new(); num_folds];
    for (i, id) in rest.into_iter().enumerate() {
        folds[i % num_folds].push(id);
    }
    Ok(FoldPlan {
        validation: order,
        folds,
    })
}
