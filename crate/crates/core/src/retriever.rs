//! Ranking knowledge entries against a compiler error.
//!
//! Scoring is BM25 over entry text where occurrences inside `<code>` spans
//! count `weight_code` times, and query tokens that came from source code
//! or quoted identifiers are weighted the same way when they hit code in the
//! entry. With `weight_code = 1` and `version_boost = 1` this is plain BM25.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::Diagnostic;
use crate::knowledge::{KnowledgeEntry, KnowledgeStore};
use crate::version::Version;

pub const DEFAULT_WEIGHT_CODE: f64 = 2.0;
pub const DEFAULT_VERSION_BOOST: f64 = 1.5;
pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub code_tokens: Vec<String>,
    #[serde(default)]
    pub version_pair: Option<(String, String)>,
}

impl Query {
    pub fn new(text: impl Into<String>) -> Self {
        Query {
            text: text.into(),
            code_tokens: Vec::new(),
            version_pair: None,
        }
    }

    pub fn with_code_tokens<S: AsRef<str>>(mut self, tokens: &[S]) -> Self {
        for t in tokens {
            for tok in tokenize(t.as_ref()) {
                if !self.code_tokens.contains(&tok) {
                    self.code_tokens.push(tok);
                }
            }
        }
        self
    }

    pub fn with_versions(mut self, source: &str, target: &str) -> Self {
        self.version_pair = Some((source.to_string(), target.to_string()));
        self
    }

    /// Distinct scoring terms: text tokens followed by any extra code tokens.
    pub fn terms(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        tokenize(&self.text)
            .into_iter()
            .chain(self.code_tokens.iter().cloned())
            .filter(|t| seen.insert(t.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub entry_id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringParams {
    pub weight_code: f64,
    pub version_boost: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams {
            weight_code: DEFAULT_WEIGHT_CODE,
            version_boost: DEFAULT_VERSION_BOOST,
        }
    }
}

impl ScoringParams {
    pub fn plain() -> Self {
        ScoringParams {
            weight_code: 1.0,
            version_boost: 1.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RetrieveError {
    #[error("knowledge store is empty")]
    EmptyStore,
    #[error("ground-truth entry `{0}` is not in the store")]
    UnknownGroundTruth(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("weight_code must be >= 1 and version_boost >= 1")]
    InvalidParams,
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
}

static TOKEN_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z0-9_$]+(?:\.[A-Za-z0-9_$]+)*").unwrap());

/// Lowercased tokens with byte offsets. A dotted member chain yields the
/// whole chain followed by each of its parts.
pub fn tokenize_with_offsets(text: &str) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    for m in TOKEN_RE.find_iter(text) {
        let s = m.as_str();
        out.push((s.to_lowercase(), m.start(), m.end()));
        if s.contains('.') {
            let mut off = m.start();
            for part in s.split('.') {
                out.push((part.to_lowercase(), off, off + part.len()));
                off += part.len() + 1;
            }
        }
    }
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text).into_iter().map(|t| t.0).collect()
}

static GUTTER_LINE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:-->.*|\d*\s*\|.*|[\^~\-]*\^[\^~\-]*)\s*$").unwrap());
static QUOTED_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""([^"]*)""#).unwrap());
static IDENT_CHAIN_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z_$][A-Za-z0-9_$]*(?:\.[A-Za-z_$][A-Za-z0-9_$]*)*$").unwrap());

/// Drops location gutters, numbered source lines, caret lines and stray
/// `-->` arrows from compiler text.
pub fn clean_text(raw: &str) -> String {
    let kept: Vec<String> = raw
        .lines()
        .filter(|l| !GUTTER_LINE_RE.is_match(l))
        .map(|l| l.replace("Error -->", "Error").replace("-->", " "))
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect();
    kept.join("\n")
}

pub fn clean_query(diag: &Diagnostic) -> Query {
    let message = clean_text(&diag.message);
    let excerpt = diag.source_excerpt.trim();
    let text = if excerpt.is_empty() {
        message.clone()
    } else {
        format!("{message}\n{excerpt}")
    };
    let quoted: Vec<String> = QUOTED_RE
        .captures_iter(&message)
        .map(|c| c[1].trim().to_string())
        .filter(|s| IDENT_CHAIN_RE.is_match(s))
        .collect();
    let mut sources: Vec<&str> = Vec::new();
    if !excerpt.is_empty() {
        sources.push(excerpt);
    }
    sources.extend(quoted.iter().map(String::as_str));
    Query::new(text).with_code_tokens(&sources)
}

fn family(v: &str) -> Option<Version> {
    Version::parse(v).map(|v| v.family())
}

/// An entry matches a migration when its change lies within the migrated
/// range: `query.source <= entry.source` and `entry.target <= query.target`.
pub fn version_match(query_pair: &(String, String), entry: &KnowledgeEntry) -> bool {
    match (
        family(&query_pair.0),
        family(&query_pair.1),
        family(&entry.source_version),
        family(&entry.target_version),
    ) {
        (Some(qs), Some(qt), Some(es), Some(et)) => qs <= es && et <= qt,
        _ => false,
    }
}

#[derive(Debug, Clone, Default)]
struct DocStats {
    prose: BTreeMap<String, f64>,
    code: BTreeMap<String, f64>,
    len: f64,
}

/// Per-entry term counts and document frequencies, built once per store.
#[derive(Debug, Clone)]
pub struct LexicalIndex {
    docs: Vec<DocStats>,
    df: BTreeMap<String, usize>,
    avg_len: f64,
}

impl LexicalIndex {
    pub fn build(store: &KnowledgeStore) -> Self {
        let mut docs = Vec::with_capacity(store.len());
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for e in &store.entries {
            let mut d = DocStats::default();
            for (tok, a, b) in tokenize_with_offsets(&e.text) {
                let in_code = e.code_spans.iter().any(|&(s, t)| s <= a && b <= t);
                let bucket = if in_code { &mut d.code } else { &mut d.prose };
                *bucket.entry(tok).or_insert(0.0) += 1.0;
                d.len += 1.0;
            }
            let terms: BTreeSet<&String> = d.prose.keys().chain(d.code.keys()).collect();
            for t in terms {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
            docs.push(d);
        }
        let avg_len = if docs.is_empty() {
            0.0
        } else {
            docs.iter().map(|d| d.len).sum::<f64>() / docs.len() as f64
        };
        LexicalIndex { docs, df, avg_len }
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn score(&self, doc: usize, terms: &[String], code_terms: &BTreeSet<&str>, weight_code: f64) -> f64 {
        let d = &self.docs[doc];
        let norm = if self.avg_len > 0.0 {
            1.0 - BM25_B + BM25_B * d.len / self.avg_len
        } else {
            1.0
        };
        let mut total = 0.0;
        for t in terms {
            let prose = d.prose.get(t).copied().unwrap_or(0.0);
            let code = d.code.get(t).copied().unwrap_or(0.0);
            let tf = prose + weight_code * code;
            if tf == 0.0 {
                continue;
            }
            let qw = if code > 0.0 && code_terms.contains(t.as_str()) {
                weight_code
            } else {
                1.0
            };
            total += qw * self.idf(t) * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
        }
        total
    }
}

/// A store paired with its index and scoring parameters.
pub struct Retriever<'a> {
    store: &'a KnowledgeStore,
    index: LexicalIndex,
    params: ScoringParams,
}

impl<'a> Retriever<'a> {
    pub fn new(store: &'a KnowledgeStore, params: ScoringParams) -> Result<Self, RetrieveError> {
        if store.is_empty() {
            return Err(RetrieveError::EmptyStore);
        }
        if !(params.weight_code >= 1.0 && params.version_boost >= 1.0) {
            return Err(RetrieveError::InvalidParams);
        }
        Ok(Retriever {
            store,
            index: LexicalIndex::build(store),
            params,
        })
    }

    pub fn store(&self) -> &KnowledgeStore {
        self.store
    }

    pub fn params(&self) -> ScoringParams {
        self.params
    }

    fn score_at(&self, i: usize, query: &Query, terms: &[String]) -> f64 {
        let code_terms: BTreeSet<&str> = query.code_tokens.iter().map(String::as_str).collect();
        let base = self.index.score(i, terms, &code_terms, self.params.weight_code);
        match &query.version_pair {
            Some(pair) if version_match(pair, &self.store.entries[i]) => base * self.params.version_boost,
            _ => base,
        }
    }

    /// Score of one entry, or `None` if the id is not in the store.
    pub fn score(&self, query: &Query, entry_id: &str) -> Option<f64> {
        let i = self.store.entries.iter().position(|e| e.id == entry_id)?;
        Some(self.score_at(i, query, &query.terms()))
    }

    /// Every entry, ranked.
    pub fn rank_all(&self, query: &Query) -> Vec<RetrievalResult> {
        let terms = query.terms();
        let scored: Vec<(f64, &str)> = (0..self.store.len())
            .map(|i| (self.score_at(i, query, &terms), self.store.entries[i].id.as_str()))
            .collect();
        finish_ranking(scored)
    }

    pub fn retrieve(&self, query: &Query, k: usize) -> Result<Vec<RetrievalResult>, RetrieveError> {
        if k == 0 {
            return Err(RetrieveError::InvalidK);
        }
        let mut all = self.rank_all(query);
        all.truncate(k);
        Ok(all)
    }

    pub fn acc_at_k(&self, eval_set: &[(Query, String)], k: usize) -> Result<f64, RetrieveError> {
        if k == 0 {
            return Err(RetrieveError::InvalidK);
        }
        if eval_set.is_empty() {
            return Err(RetrieveError::EmptyEvalSet);
        }
        let mut hits = 0usize;
        for (q, truth) in eval_set {
            if self.store.get(truth).is_none() {
                return Err(RetrieveError::UnknownGroundTruth(truth.clone()));
            }
            if self.retrieve(q, k)?.iter().any(|r| &r.entry_id == truth) {
                hits += 1;
            }
        }
        Ok(100.0 * hits as f64 / eval_set.len() as f64)
    }
}

/// Sorts by descending score, then ascending id, and assigns ranks from 1.
fn finish_ranking(mut scored: Vec<(f64, &str)>) -> Vec<RetrievalResult> {
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (score, id))| RetrievalResult {
            entry_id: id.to_string(),
            score,
            rank: i + 1,
        })
        .collect()
}

/// Lexical top-k with default parameters.
pub fn retrieve(query: &Query, store: &KnowledgeStore, k: usize) -> Result<Vec<RetrievalResult>, RetrieveError> {
    Retriever::new(store, ScoringParams::default())?.retrieve(query, k)
}

pub fn acc_at_k(
    eval_set: &[(Query, String)],
    store: &KnowledgeStore,
    k: usize,
    params: ScoringParams,
) -> Result<f64, RetrieveError> {
    Retriever::new(store, params)?.acc_at_k(eval_set, k)
}

/// One training/evaluation pair: a query, a knowledge text, and whether they
/// belong together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTriple {
    pub query: String,
    pub answer: String,
    pub label: u8,
}

/// An eval-set line: a labeled triple plus the id of the entry it points at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    #[serde(flatten)]
    pub triple: LabeledTriple,
    pub groundtruth_id: String,
}

/// Turns raw error text (compiler output or a bare message) into a query.
pub fn query_from_error_text(raw: &str) -> Query {
    match crate::compiler::parse_diagnostics(raw).first() {
        Some(d) if d.line().is_some() || !d.source_excerpt.is_empty() => clean_query(d),
        _ => Query::new(clean_text(raw)),
    }
}

/// Reads a line-delimited eval set. Only positive (`label = 1`) records
/// become queries; negatives exist for training and are skipped.
pub fn parse_eval_set(text: &str) -> Result<Vec<(Query, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: EvalRecord = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        match r.triple.label {
            1 => out.push((query_from_error_text(&r.triple.query), r.groundtruth_id)),
            0 => {}
            l => return Err(format!("line {}: label must be 0 or 1, got {l}", i + 1)),
        }
    }
    Ok(out)
}

/// Source of text embeddings; one vector per input text.
pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrieveError>;
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Ranks by cosine similarity of backend vectors, mapped to `[0, 1]` as
/// `(cos + 1) / 2`, with the lexical tie-break.
pub fn embed_backend_retrieve(
    query: &Query,
    store: &KnowledgeStore,
    k: usize,
    backend: &dyn EmbeddingBackend,
) -> Result<Vec<RetrievalResult>, RetrieveError> {
    if store.is_empty() {
        return Err(RetrieveError::EmptyStore);
    }
    if k == 0 {
        return Err(RetrieveError::InvalidK);
    }
    let mut texts = Vec::with_capacity(store.len() + 1);
    texts.push(query.text.clone());
    texts.extend(store.entries.iter().map(|e| e.text.clone()));
    let vectors = backend.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(RetrieveError::BackendUnavailable(format!(
            "expected {} vectors, got {}",
            texts.len(),
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(RetrieveError::BackendUnavailable("vectors differ in dimension".into()));
    }
    let scored: Vec<(f64, &str)> = store
        .entries
        .iter()
        .zip(&vectors[1..])
        .map(|(e, v)| ((cosine(&vectors[0], v) + 1.0) / 2.0, e.id.as_str()))
        .collect();
    let mut out = finish_ranking(scored);
    out.truncate(k);
    Ok(out)
}

/// Embedding retrieval that degrades to the lexical ranking when the
/// backend cannot be used.
pub fn retrieve_with_fallback(
    retriever: &Retriever<'_>,
    query: &Query,
    k: usize,
    backend: Option<&dyn EmbeddingBackend>,
) -> Result<Vec<RetrievalResult>, RetrieveError> {
    if let Some(b) = backend {
        match embed_backend_retrieve(query, retriever.store(), k, b) {
            Err(RetrieveError::BackendUnavailable(why)) => {
                log::warn!("embedding backend unavailable ({why}); using lexical retrieval");
            }
            other => return other,
        }
    }
    retriever.retrieve(query, k)
}
