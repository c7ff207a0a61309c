//! Breaking-change knowledge base: HTML ingestion, curation and the
//! line-delimited JSON store.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use scraper::{ElementRef, Html, Node, Selector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compiler::ErrorCategory;
use crate::version::{self, Version};

/// Current on-disk format version.
pub const SCHEMA_VERSION: u32 = 1;
const STORE_KIND: &str = "solfix-knowledge";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: String,
    pub source_version: String,
    pub target_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_hint: Option<ErrorCategory>,
    pub text: String,
    /// Byte ranges of `text` that were inside `<code>` markup.
    pub code_spans: Vec<(usize, usize)>,
}

impl KnowledgeEntry {
    pub fn new(
        source_version: &str,
        target_version: &str,
        text: &str,
        code_spans: Vec<(usize, usize)>,
    ) -> Result<Self, KbError> {
        let (s, t) = version_pair(source_version, target_version)?;
        let entry = KnowledgeEntry {
            id: entry_id(&s, &t, text),
            source_version: s,
            target_version: t,
            category_hint: None,
            text: text.to_string(),
            code_spans,
        };
        entry.check()?;
        Ok(entry)
    }

    pub fn code_texts(&self) -> impl Iterator<Item = &str> {
        self.code_spans.iter().map(|&(a, b)| &self.text[a..b])
    }

    /// Text with code spans wrapped in backticks.
    pub fn render_marked(&self) -> String {
        let mut out = String::with_capacity(self.text.len() + 2 * self.code_spans.len());
        let mut pos = 0;
        for &(a, b) in &self.code_spans {
            out.push_str(&self.text[pos..a]);
            out.push('`');
            out.push_str(&self.text[a..b]);
            out.push('`');
            pos = b;
        }
        out.push_str(&self.text[pos..]);
        out
    }

    fn check(&self) -> Result<(), KbError> {
        let mut prev_end = 0;
        for &(a, b) in &self.code_spans {
            let ok = a < b
                && a >= prev_end
                && b <= self.text.len()
                && self.text.is_char_boundary(a)
                && self.text.is_char_boundary(b);
            if !ok {
                return Err(KbError::InvalidEntry {
                    id: self.id.clone(),
                    reason: format!("code span {a}..{b} out of order or out of bounds"),
                });
            }
            prev_end = b;
        }
        if !version::is_upgrade(&self.source_version, &self.target_version) {
            return Err(KbError::InvalidVersionPair {
                from: self.source_version.clone(),
                to: self.target_version.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<SourceDigest>,
    /// Entries dropped during curation as benign.
    pub dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeStore {
    pub entries: Vec<KnowledgeEntry>,
    pub provenance: Provenance,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("malformed HTML: {0}")]
    MalformedHtml(String),
    #[error("invalid version pair {from} -> {to}: source must be an older family")]
    InvalidVersionPair { from: String, to: String },
    #[error("no curation label for entry `{0}`")]
    MissingLabel(String),
    #[error("invalid entry `{id}`: {reason}")]
    InvalidEntry { id: String, reason: String },
    #[error("{}: {reason}", path.display())]
    IoFailure { path: PathBuf, reason: String },
    #[error("{}: unsupported schema version {found} (this build reads {SCHEMA_VERSION})", path.display())]
    SchemaMismatch { path: PathBuf, found: u32 },
}

fn io_failure(path: &Path, reason: impl ToString) -> KbError {
    KbError::IoFailure {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn version_pair(source: &str, target: &str) -> Result<(String, String), KbError> {
    let bad = || KbError::InvalidVersionPair {
        from: source.to_string(),
        to: target.to_string(),
    };
    let s = Version::parse(source).ok_or_else(bad)?.family();
    let t = Version::parse(target).ok_or_else(bad)?.family();
    if s >= t {
        return Err(bad());
    }
    Ok((s.to_string(), t.to_string()))
}

/// Stable entry key: 12 hex digits of SHA-256 over the version pair and text.
pub fn entry_id(source_version: &str, target_version: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(source_version.as_bytes());
    h.update([0]);
    h.update(target_version.as_bytes());
    h.update([0]);
    h.update(text.as_bytes());
    hex(&h.finalize())[..12].to_string()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

/// Accumulates text with collapsed whitespace and records where each
/// `<code>` element's visible characters land.
#[derive(Default)]
struct TextBuilder {
    out: String,
    pending_space: bool,
    spans: Vec<(usize, usize)>,
}

impl TextBuilder {
    fn push_text(&mut self, text: &str, code: &mut Option<(usize, usize)>) {
        for c in text.chars() {
            if c.is_whitespace() {
                self.pending_space = !self.out.is_empty();
                continue;
            }
            if self.pending_space {
                self.out.push(' ');
                self.pending_space = false;
            }
            let at = self.out.len();
            self.out.push(c);
            if let Some(span) = code {
                if span.0 == usize::MAX {
                    span.0 = at;
                }
                span.1 = self.out.len();
            }
        }
    }

    fn walk(&mut self, el: ElementRef<'_>, code: &mut Option<(usize, usize)>) {
        for child in el.children() {
            match child.value() {
                Node::Text(t) => self.push_text(t, code),
                Node::Element(e) => {
                    let child_el = ElementRef::wrap(child).expect("element node");
                    let name = e.name();
                    if is_heading(name) {
                        continue;
                    }
                    if name == "code" && code.is_none() {
                        let mut span = Some((usize::MAX, 0));
                        self.walk(child_el, &mut span);
                        if let Some((a, b)) = span.filter(|s| s.0 != usize::MAX) {
                            self.spans.push((a, b));
                        }
                    } else {
                        self.walk(child_el, code);
                    }
                }
                _ => {}
            }
        }
    }
}

fn is_heading(name: &str) -> bool {
    matches!(name, "h1" | "h2" | "h3" | "h4" | "h5" | "h6" | "header")
}

/// Extracts one entry per `<p>` inside `<section>` content. Headings are
/// dropped, every tag but `<code>` is stripped, and whitespace is collapsed.
pub fn ingest_html(html: &str, source_version: &str, target_version: &str) -> Result<Vec<KnowledgeEntry>, KbError> {
    let (src, tgt) = version_pair(source_version, target_version)?;
    let doc = Html::parse_document(html);
    let section = Selector::parse("section").expect("valid selector");
    if doc.select(&section).next().is_none() {
        return Err(KbError::MalformedHtml("no <section> element".into()));
    }
    let para = Selector::parse("section p").expect("valid selector");
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for p in doc.select(&para) {
        if p.ancestors()
            .filter_map(ElementRef::wrap)
            .any(|a| is_heading(a.value().name()))
        {
            continue;
        }
        let mut b = TextBuilder::default();
        b.walk(p, &mut None);
        if b.out.is_empty() {
            continue;
        }
        let id = entry_id(&src, &tgt, &b.out);
        if !seen.insert(id.clone()) {
            continue;
        }
        out.push(KnowledgeEntry {
            id,
            source_version: src.clone(),
            target_version: tgt.clone(),
            category_hint: None,
            text: b.out,
            code_spans: b.spans,
        });
    }
    Ok(out)
}

/// Version pair encoded in a documentation file name such as `0.7-0.8.html`.
pub fn versions_from_file_name(path: &Path) -> Option<(String, String)> {
    let stem = path.file_stem()?.to_str()?;
    let (a, b) = stem.split_once('-')?;
    version_pair(a, b).ok()
}

/// Ingests every `<src>-<tgt>.html` file in `dir`, in file-name order.
pub fn ingest_dir(dir: &Path) -> Result<(Vec<KnowledgeEntry>, Vec<SourceDigest>), KbError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_failure(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "html" || x == "htm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(io_failure(dir, "no .html files found"));
    }
    let mut entries = Vec::new();
    let mut digests = Vec::new();
    for f in files {
        let (src, tgt) = versions_from_file_name(&f)
            .ok_or_else(|| io_failure(&f, "file name must name a version pair, e.g. 0.7-0.8.html"))?;
        let bytes = fs::read(&f).map_err(|e| io_failure(&f, e))?;
        let html = String::from_utf8_lossy(&bytes);
        let batch = ingest_html(&html, &src, &tgt).map_err(|e| match e {
            KbError::MalformedHtml(m) => KbError::MalformedHtml(format!("{}: {m}", f.display())),
            other => other,
        })?;
        log::info!("{}: {} entries", f.display(), batch.len());
        entries.extend(batch);
        digests.push(SourceDigest {
            file: f.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            sha256: sha256_hex(&bytes),
        });
    }
    Ok((entries, digests))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    ErrorInducing,
    Benign,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Bare(LabelKind),
    Full {
        label: LabelKind,
        #[serde(default)]
        category: Option<ErrorCategory>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Label {
    pub kind: LabelKind,
    pub category: Option<ErrorCategory>,
}

/// Curation labels keyed by entry id.
///
/// JSON object whose values are either `"error_inducing"` / `"benign"` or
/// `{"label": ..., "category": "Type"}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Labels(pub BTreeMap<String, Label>);

impl Labels {
    pub fn parse(json: &str) -> Result<Self, serde_json::Error> {
        let raw: BTreeMap<String, RawLabel> = serde_json::from_str(json)?;
        Ok(Labels(
            raw.into_iter()
                .map(|(id, l)| {
                    let label = match l {
                        RawLabel::Bare(kind) => Label { kind, category: None },
                        RawLabel::Full { label, category } => Label { kind: label, category },
                    };
                    (id, label)
                })
                .collect(),
        ))
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        Self::parse(&text).map_err(|e| io_failure(path, e))
    }

    pub fn get(&self, id: &str) -> Option<&Label> {
        self.0.get(id)
    }
}

/// JSON skeleton labelling every entry, for hand curation.
pub fn label_template(entries: &[KnowledgeEntry]) -> String {
    let map: BTreeMap<&str, serde_json::Value> = entries
        .iter()
        .map(|e| {
            (
                e.id.as_str(),
                serde_json::json!({
                    "label": "error_inducing",
                    "category": null,
                    "pair": format!("{}->{}", e.source_version, e.target_version),
                    "text": e.text,
                }),
            )
        })
        .collect();
    serde_json::to_string_pretty(&map).expect("serialisable")
}

/// Keeps the error-inducing entries, attaching category hints from labels.
pub fn curate(entries: Vec<KnowledgeEntry>, labels: &Labels) -> Result<KnowledgeStore, KbError> {
    let mut kept = Vec::new();
    let mut dropped = 0;
    let mut seen = BTreeSet::new();
    for mut e in entries {
        let label = labels.get(&e.id).ok_or_else(|| KbError::MissingLabel(e.id.clone()))?;
        if !seen.insert(e.id.clone()) {
            continue;
        }
        match label.kind {
            LabelKind::ErrorInducing => {
                e.category_hint = label.category.or(e.category_hint);
                kept.push(e);
            }
            LabelKind::Benign => dropped += 1,
        }
    }
    Ok(KnowledgeStore {
        entries: kept,
        provenance: Provenance {
            sources: Vec::new(),
            dropped,
        },
    })
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    kind: String,
    #[serde(default)]
    provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoreStats {
    pub entries: usize,
    pub dropped: usize,
    pub with_code_spans: usize,
    pub by_version_pair: BTreeMap<String, usize>,
    pub by_category: BTreeMap<String, usize>,
}

impl KnowledgeStore {
    pub fn new(entries: Vec<KnowledgeEntry>) -> Self {
        KnowledgeStore {
            entries,
            provenance: Provenance::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&KnowledgeEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn save(&self, path: &Path) -> Result<(), KbError> {
        let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
        let mut w = BufWriter::new(file);
        let header = Header {
            schema_version: SCHEMA_VERSION,
            kind: STORE_KIND.to_string(),
            provenance: self.provenance.clone(),
        };
        write_line(&mut w, &header).map_err(|e| io_failure(path, e))?;
        for e in &self.entries {
            write_line(&mut w, e).map_err(|e| io_failure(path, e))?;
        }
        w.flush().map_err(|e| io_failure(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        Self::from_jsonl(&text, path)
    }

    /// Parses the store format; `path` is only used in error messages.
    pub fn from_jsonl(text: &str, path: &Path) -> Result<Self, KbError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| io_failure(path, "empty file"))?;
        let header: serde_json::Value =
            serde_json::from_str(first).map_err(|e| io_failure(path, format!("line 1: {e}")))?;
        let found = header
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| io_failure(path, "line 1: missing schema_version header"))?;
        if found != u64::from(SCHEMA_VERSION) {
            return Err(KbError::SchemaMismatch {
                path: path.to_path_buf(),
                found: found.try_into().unwrap_or(u32::MAX),
            });
        }
        let header: Header = serde_json::from_value(header).map_err(|e| io_failure(path, format!("line 1: {e}")))?;
        if header.kind != STORE_KIND {
            return Err(io_failure(path, format!("line 1: unexpected kind `{}`", header.kind)));
        }
        let mut entries = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, line) in lines {
            let e: KnowledgeEntry =
                serde_json::from_str(line).map_err(|err| io_failure(path, format!("line {}: {err}", i + 1)))?;
            e.check()
                .map_err(|err| io_failure(path, format!("line {}: {err}", i + 1)))?;
            if !ids.insert(e.id.clone()) {
                return Err(io_failure(path, format!("line {}: duplicate id `{}`", i + 1, e.id)));
            }
            entries.push(e);
        }
        if !text.ends_with('\n') && !entries.is_empty() {
            return Err(io_failure(path, "file is truncated (no trailing newline)"));
        }
        Ok(KnowledgeStore {
            entries,
            provenance: header.provenance,
        })
    }

    pub fn stats(&self) -> StoreStats {
        let mut by_version_pair = BTreeMap::new();
        let mut by_category = BTreeMap::new();
        for e in &self.entries {
            *by_version_pair
                .entry(format!("{}->{}", e.source_version, e.target_version))
                .or_insert(0) += 1;
            let cat = e.category_hint.map_or("unlabeled", ErrorCategory::as_str);
            *by_category.entry(cat.to_string()).or_insert(0) += 1;
        }
        StoreStats {
            entries: self.entries.len(),
            dropped: self.provenance.dropped,
            with_code_spans: self.entries.iter().filter(|e| !e.code_spans.is_empty()).count(),
            by_version_pair,
            by_category,
        }
    }
}

fn write_line<T: Serialize>(w: &mut impl Write, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")
}
