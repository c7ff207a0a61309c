//! Pass rate, BLEU-4 and edit similarity, and the per-category summary table.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::ErrorCategory;
use crate::dataset::DatasetInstance;
use crate::repair::RepairReport;

pub const SMOOTHING_EPSILON: f64 = 1e-9;
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no reports to score")]
    EmptyInput,
    #[error("{0} text has no tokens")]
    EmptyText(&'static str),
    #[error("{datasets} dataset instances but {reports} reports")]
    LengthMismatch { datasets: usize, reports: usize },
}

/// 100 × fixed / total.
pub fn pass_rate(reports: &[RepairReport]) -> Result<f64, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let fixed = reports.iter().filter(|r| r.status.is_success()).count();
    Ok(100.0 * fixed as f64 / reports.len() as f64)
}

static TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[a-z0-9_]+|[^\sa-z0-9_]").unwrap());

/// Lowercased word runs, with each punctuation character its own token.
pub fn bleu_tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    TOKEN.find_iter(&lower).map(|m| m.as_str().to_string()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

/// Sentence BLEU-4 with uniform weights, brevity penalty, and epsilon
/// smoothing of zero precisions.
pub fn bleu4(candidate: &str, reference: &str) -> Result<f64, MetricsError> {
    let c = bleu_tokens(candidate);
    let r = bleu_tokens(reference);
    if c.is_empty() {
        return Err(MetricsError::EmptyText("candidate"));
    }
    if r.is_empty() {
        return Err(MetricsError::EmptyText("reference"));
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngram_counts(&c, n);
        let refs = ngram_counts(&r, n);
        let total: usize = cand.values().sum();
        let p = if total == 0 {
            // Candidate too short for this order: perfect if the reference is too.
            if refs.is_empty() {
                1.0
            } else {
                SMOOTHING_EPSILON
            }
        } else {
            let clipped: usize = cand
                .iter()
                .map(|(g, &k)| k.min(refs.get(g).copied().unwrap_or(0)))
                .sum();
            if clipped == 0 {
                SMOOTHING_EPSILON
            } else {
                clipped as f64 / total as f64
            }
        };
        log_sum += p.ln() / 4.0;
    }
    let (cl, rl) = (c.len() as f64, r.len() as f64);
    let bp = if cl > rl { 1.0 } else { (1.0 - rl / cl).exp() };
    Ok((bp * log_sum.exp()).clamp(0.0, 1.0))
}

/// 1 − chars-Levenshtein / longer length. Two empty texts score 1.0.
pub fn edit_similarity(candidate: &str, reference: &str) -> f64 {
    let longest = candidate.chars().count().max(reference.chars().count());
    if longest == 0 {
        log::warn!("edit similarity of two empty texts; scoring 1.0");
        return 1.0;
    }
    (longest - strsim::levenshtein(candidate, reference)) as f64 / longest as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    /// Category name, or `average` for the total row.
    pub category: String,
    pub count: usize,
    pub fixed: usize,
    pub pass_rate: f64,
    pub bleu4: f64,
    pub es: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub id: String,
    pub category: ErrorCategory,
    pub fixed: bool,
    pub bleu4: f64,
    pub es: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub categories: Vec<CategoryRow>,
    pub average: CategoryRow,
    /// Same scores restricted to fixed instances; absent when none were fixed.
    pub fixed_only: Option<CategoryRow>,
    pub instances: Vec<InstanceScore>,
}

fn row(category: String, scores: &[&InstanceScore]) -> CategoryRow {
    let n = scores.len();
    let fixed = scores.iter().filter(|s| s.fixed).count();
    let mean = |f: fn(&InstanceScore) -> f64| 100.0 * scores.iter().map(|s| f(s)).sum::<f64>() / n as f64;
    CategoryRow {
        category,
        count: n,
        fixed,
        pass_rate: 100.0 * fixed as f64 / n as f64,
        bleu4: mean(|s| s.bleu4),
        es: mean(|s| s.es),
    }
}

/// Scores every final source against its groundtruth, fixed or not.
/// `dataset[i]` pairs with `reports[i]`. Percentages throughout.
pub fn evaluate(dataset: &[DatasetInstance], reports: &[RepairReport]) -> Result<EvalSummary, MetricsError> {
    if dataset.len() != reports.len() {
        return Err(MetricsError::LengthMismatch {
            datasets: dataset.len(),
            reports: reports.len(),
        });
    }
    if dataset.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let instances: Vec<InstanceScore> = dataset
        .iter()
        .zip(reports)
        .map(|(d, r)| {
            let bleu = bleu4(&r.final_source, &d.groundtruth_patch).unwrap_or_else(|e| {
                log::warn!("{}: {e}; BLEU-4 scored 0", d.id);
                0.0
            });
            InstanceScore {
                id: d.id.clone(),
                category: d.error_category,
                fixed: r.status.is_success(),
                bleu4: bleu,
                es: edit_similarity(&r.final_source, &d.groundtruth_patch),
            }
        })
        .collect();

    let mut groups: BTreeMap<ErrorCategory, Vec<&InstanceScore>> = BTreeMap::new();
    for s in &instances {
        groups.entry(s.category).or_default().push(s);
    }
    let categories = groups
        .into_iter()
        .map(|(c, v)| row(c.as_str().to_string(), &v))
        .collect();
    let all: Vec<&InstanceScore> = instances.iter().collect();
    let fixed: Vec<&InstanceScore> = instances.iter().filter(|s| s.fixed).collect();
    Ok(EvalSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        categories,
        average: row("average".into(), &all),
        fixed_only: (!fixed.is_empty()).then(|| row("fixed only".into(), &fixed)),
        instances,
    })
}

impl EvalSummary {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:>6} {:>10} {:>8} {:>8}",
            "category", "count", "fixed", "pass rate", "BLEU-4", "ES"
        );
        let line = |out: &mut String, r: &CategoryRow| {
            let _ = writeln!(
                out,
                "{:<14} {:>6} {:>6} {:>9.2}% {:>7.2}% {:>7.2}%",
                r.category, r.count, r.fixed, r.pass_rate, r.bleu4, r.es
            );
        };
        for r in &self.categories {
            line(&mut out, r);
        }
        let _ = writeln!(out, "{}", "-".repeat(57));
        line(&mut out, &self.average);
        if let Some(f) = &self.fixed_only {
            line(&mut out, f);
        }
        out
    }
}
