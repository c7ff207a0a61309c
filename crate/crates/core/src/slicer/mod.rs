//! Error-directed code slicing.
//!
//! The contract is parsed into a structural tree ([`parse_structure`]); the
//! nodes at the diagnostic's line become anchors, and one layer of
//! structurally connected code is added around them: the enclosing control
//! headers, declarations and earlier initialisations of identifiers the
//! anchors use, and contract-level declarations of those identifiers. The
//! pragma is always kept. The result is a set of whole-line snippets copied
//! verbatim from the source.

mod lexer;
mod parser;

use std::collections::BTreeSet;
use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::Diagnostic;
pub use parser::is_reserved;

/// Upper bound on the number of source lines in a slice.
pub const MAX_SLICE_LINES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Pragma,
    ContractDef,
    StateVarDecl,
    StructDef,
    FunctionDef,
    ModifierDef,
    EventDef,
    Statement,
    Expression,
    Identifier,
}

/// 1-based, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl Span {
    pub fn contains_line(&self, line: u32) -> bool {
        self.start_line <= line && line <= self.end_line
    }

    pub fn contains(&self, line: u32, col: u32) -> bool {
        (line, col) >= (self.start_line, self.start_col) && (line, col) <= (self.end_line, self.end_col)
    }

    pub fn encloses(&self, other: &Span) -> bool {
        (self.start_line, self.start_col) <= (other.start_line, other.start_col)
            && (other.end_line, other.end_col) <= (self.end_line, self.end_col)
    }
}

/// A structural node.
///
/// Struct fields are `StateVarDecl` children of their `StructDef`; enums are
/// `StructDef`s without children. Compound statements (`if`, loops, blocks,
/// `try`) are `Statement`s whose `header` covers the part before the body;
/// their condition is an `Expression` child.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub kind: NodeKind,
    pub span: Span,
    /// Byte range of the node in the source.
    pub range: Range<usize>,
    pub children: Vec<AstNode>,
    /// Identifier names in the node, including dotted member chains
    /// (`msg.sender`) next to their parts.
    pub identifiers: BTreeSet<String>,
    /// Declared name for definitions and state variables.
    pub name: Option<String>,
    /// Local variables introduced by a statement.
    pub declares: Vec<String>,
    /// Assignment targets of a statement: root identifier and member chain.
    pub assigns: Vec<String>,
    /// Parameter and named return values of functions and modifiers.
    pub params: Vec<String>,
    pub header: Option<Span>,
}

impl AstNode {
    fn declares_name(&self, name: &str) -> bool {
        self.name.as_deref() == Some(name) || self.declares.iter().any(|d| d == name)
    }

    fn is_compound(&self) -> bool {
        self.kind == NodeKind::Statement && self.header.is_some()
    }

    /// Visits every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a AstNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub span: Span,
    /// Byte range of `text` in the source.
    pub range: Range<usize>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSlice {
    pub snippets: Vec<Snippet>,
    pub error_keywords: Vec<String>,
    pub covers_error_line: bool,
    pub error_line: Option<u32>,
    pub whole_file: bool,
}

impl CodeSlice {
    pub fn line_count(&self) -> usize {
        self.snippets
            .iter()
            .map(|s| (s.span.end_line - s.span.start_line + 1) as usize)
            .sum()
    }

    pub fn lines(&self) -> BTreeSet<u32> {
        self.snippets
            .iter()
            .flat_map(|s| s.span.start_line..=s.span.end_line)
            .collect()
    }

    pub fn contains_line(&self, line: u32) -> bool {
        self.snippets.iter().any(|s| s.span.contains_line(line))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SliceError {
    #[error("cannot parse contract structure at {line}:{column}: {reason}")]
    ParseFailure { line: u32, column: u32, reason: String },
}

pub fn parse_structure(source: &str) -> Result<AstNode, SliceError> {
    if source.trim().is_empty() {
        return Err(SliceError::ParseFailure {
            line: 1,
            column: 1,
            reason: "empty source".into(),
        });
    }
    parser::parse(source)
}

static QUOTED_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""([^"]*)""#).unwrap());
static CHAIN_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[A-Za-z_$][A-Za-z0-9_$]*(?:\.[A-Za-z_$][A-Za-z0-9_$]*)*").unwrap());
static WHOLE_CHAIN_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z_$][A-Za-z0-9_$]*(?:\.[A-Za-z_$][A-Za-z0-9_$]*)*$").unwrap());

fn keyword_allowed(token: &str) -> bool {
    let head = token.split('.').next().unwrap_or(token);
    !is_reserved(token) && !(is_reserved(head) && !token.contains('.'))
}

/// Prose words in messages are plain lowercase or capitalised words; code
/// names carry an underscore, digit, dot, `$` or an inner capital.
fn looks_like_code(token: &str) -> bool {
    token.contains(['.', '_', '$'])
        || token.chars().any(|c| c.is_ascii_digit())
        || token.chars().skip(1).any(|c| c.is_ascii_uppercase())
}

/// Error keywords, in priority order: quoted identifiers, the expression
/// under the caret, then code-shaped names elsewhere in the message.
pub fn extract_keywords(diag: &Diagnostic) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let push = |k: &str, out: &mut Vec<String>| {
        if keyword_allowed(k) && !out.iter().any(|x| x == k) {
            out.push(k.to_string());
        }
    };
    let body = diag.body();

    for cap in QUOTED_RE.captures_iter(body) {
        let inner = cap[1].trim();
        if WHOLE_CHAIN_RE.is_match(inner) {
            push(inner, &mut out);
        }
    }

    if let (Some(col), false) = (diag.column(), diag.source_excerpt.is_empty()) {
        let chars: Vec<(usize, char)> = diag.source_excerpt.char_indices().collect();
        let start_char = (col as usize).saturating_sub(1);
        if start_char < chars.len() {
            let start_byte = chars[start_char].0;
            let end_char = start_char + diag.caret_len.unwrap_or(1).max(1) as usize;
            let end_byte = chars.get(end_char).map_or(diag.source_excerpt.len(), |c| c.0);
            let under = CHAIN_RE
                .find_iter(&diag.source_excerpt)
                .find(|m| m.end() > start_byte && m.start() < end_byte);
            if let Some(m) = under {
                push(m.as_str(), &mut out);
            }
        }
    }

    let unquoted = QUOTED_RE.replace_all(body, " ");
    for m in CHAIN_RE.find_iter(&unquoted) {
        if looks_like_code(m.as_str()) {
            push(m.as_str(), &mut out);
        }
    }
    out
}

struct Flat<'a> {
    node: &'a AstNode,
    parent: Option<usize>,
}

fn flatten(root: &AstNode) -> Vec<Flat<'_>> {
    fn go<'a>(n: &'a AstNode, parent: Option<usize>, out: &mut Vec<Flat<'a>>) {
        let me = out.len();
        out.push(Flat { node: n, parent });
        for c in &n.children {
            go(c, Some(me), out);
        }
    }
    let mut out = Vec::new();
    go(root, None, &mut out);
    out
}

/// Inclusive line range.
type Region = (u32, u32);

fn full(n: &AstNode) -> Region {
    (n.span.start_line, n.span.end_line)
}

fn head(n: &AstNode) -> Region {
    let h = n.header.unwrap_or(n.span);
    (h.start_line, h.end_line)
}

struct LineIndex<'s> {
    source: &'s str,
    starts: Vec<usize>,
}

impl<'s> LineIndex<'s> {
    fn new(source: &'s str) -> Self {
        let mut starts = vec![0];
        starts.extend(source.match_indices('\n').map(|(i, _)| i + 1));
        if starts.len() > 1 && *starts.last().unwrap() == source.len() {
            starts.pop();
        }
        LineIndex { source, starts }
    }

    fn line_count(&self) -> u32 {
        self.starts.len() as u32
    }

    fn snippet(&self, (a, b): Region) -> Snippet {
        let start = self.starts[(a - 1) as usize];
        let mut end = match self.starts.get(b as usize) {
            Some(next) => next - 1,
            None => self.source.strip_suffix('\n').map_or(self.source.len(), str::len),
        };
        if end > start && self.source.as_bytes()[end - 1] == b'\r' {
            end -= 1;
        }
        let text = &self.source[start..end];
        let last_line = text.rsplit('\n').next().unwrap_or("");
        Snippet {
            span: Span {
                start_line: a,
                start_col: 1,
                end_line: b,
                end_col: (last_line.trim_end_matches('\r').chars().count() as u32).max(1),
            },
            range: start..end,
            text: text.to_string(),
        }
    }
}

fn merge(mut regions: Vec<Region>) -> Vec<Region> {
    regions.sort();
    let mut out: Vec<Region> = Vec::new();
    for (a, b) in regions {
        match out.last_mut() {
            Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn total_lines(regions: &[Region]) -> usize {
    merge(regions.to_vec()).iter().map(|(a, b)| (b - a + 1) as usize).sum()
}

/// Whole-file slice; always valid and used when slicing is disabled.
pub fn whole_file(source: &str, diag: Option<&Diagnostic>) -> CodeSlice {
    let idx = LineIndex::new(source);
    let snippets = if source.is_empty() {
        Vec::new()
    } else {
        vec![idx.snippet((1, idx.line_count()))]
    };
    CodeSlice {
        snippets,
        error_keywords: diag.map(extract_keywords).unwrap_or_default(),
        covers_error_line: true,
        error_line: diag.and_then(Diagnostic::line),
        whole_file: true,
    }
}

/// Union of several slices of the same source, for multi-error prompts.
pub fn union(source: &str, slices: &[CodeSlice]) -> CodeSlice {
    if slices.iter().any(|s| s.whole_file) || slices.is_empty() {
        let mut s = whole_file(source, None);
        s.error_line = slices.first().and_then(|s| s.error_line);
        s.error_keywords = slices.iter().flat_map(|s| s.error_keywords.clone()).collect();
        s.error_keywords.dedup();
        return s;
    }
    let idx = LineIndex::new(source);
    let regions = slices
        .iter()
        .flat_map(|s| s.snippets.iter().map(|sn| (sn.span.start_line, sn.span.end_line)))
        .collect();
    let mut keywords: Vec<String> = Vec::new();
    for k in slices.iter().flat_map(|s| &s.error_keywords) {
        if !keywords.contains(k) {
            keywords.push(k.clone());
        }
    }
    CodeSlice {
        snippets: merge(regions).into_iter().map(|r| idx.snippet(r)).collect(),
        error_keywords: keywords,
        covers_error_line: slices.iter().all(|s| s.covers_error_line),
        error_line: slices[0].error_line,
        whole_file: false,
    }
}

pub fn slice(root: &AstNode, source: &str, diag: &Diagnostic) -> CodeSlice {
    let keywords = extract_keywords(diag);
    slice_with_keywords(root, source, diag.line(), diag.column(), &keywords)
}

/// Parses and slices, falling back to the whole file when the contract
/// cannot be parsed.
pub fn slice_source(source: &str, diag: &Diagnostic) -> CodeSlice {
    match parse_structure(source) {
        Ok(root) => slice(&root, source, diag),
        Err(e) => {
            log::warn!("structural parse failed, using whole file: {e}");
            whole_file(source, Some(diag))
        }
    }
}

pub fn slice_with_keywords(
    root: &AstNode,
    source: &str,
    line: Option<u32>,
    column: Option<u32>,
    keywords: &[String],
) -> CodeSlice {
    let idx = LineIndex::new(source);
    let fallback = || {
        let mut s = whole_file(source, None);
        s.error_keywords = keywords.to_vec();
        s.error_line = line;
        s
    };
    let Some(line) = line.filter(|&l| l >= 1 && l <= idx.line_count()) else {
        return fallback();
    };

    let flat = flatten(root);
    let ancestors = |mut i: usize| {
        let mut out = Vec::new();
        while let Some(p) = flat[i].parent {
            out.push(p);
            i = p;
        }
        out
    };

    // 1. leaf-most nodes on the error line
    let mut hits = Vec::new();
    collect_hits(&flat, 0, line, column, &mut hits);

    // 2. map hits to the statement-level node that owns them
    let mut anchors: Vec<Region> = Vec::new();
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut owners: Vec<usize> = Vec::new();
    for &h in &hits {
        let n = flat[h].node;
        let (owner, region, ids) = match n.kind {
            NodeKind::Identifier | NodeKind::Expression => {
                let mut o = flat[h].parent.unwrap_or(0);
                if flat[o].node.kind == NodeKind::Expression {
                    o = flat[o].parent.unwrap_or(0);
                }
                let on = flat[o].node;
                if on.is_compound() {
                    let expr_ids = on
                        .children
                        .iter()
                        .filter(|c| c.kind == NodeKind::Expression)
                        .flat_map(|c| c.identifiers.iter().cloned())
                        .collect();
                    let r = head(on);
                    (o, (r.0.min(line), r.1.max(line)), expr_ids)
                } else if o == 0 {
                    (h, (line, line), n.identifiers.clone())
                } else {
                    (o, full(on), on.identifiers.clone())
                }
            }
            NodeKind::Statement if !n.is_compound() && h != 0 => (h, full(n), n.identifiers.clone()),
            NodeKind::Pragma | NodeKind::StateVarDecl | NodeKind::EventDef => (h, full(n), n.identifiers.clone()),
            _ => {
                let r = head(n);
                if h != 0 && line >= r.0 && line <= r.1 {
                    let ids = header_identifiers(n);
                    (h, r, ids)
                } else {
                    (h, (line, line), BTreeSet::new())
                }
            }
        };
        owners.push(owner);
        anchors.push(region);
        used.extend(ids);
    }
    if anchors.is_empty() {
        anchors.push((line, line));
    }

    // 3. one layer of structurally connected nodes
    let mut connected: Vec<Region> = Vec::new();
    let mut keyword_hits: Vec<Region> = Vec::new();
    let names: BTreeSet<&str> = used.iter().map(String::as_str).collect();
    let keyword_names: BTreeSet<&str> = keywords
        .iter()
        .flat_map(|k| std::iter::once(k.as_str()).chain(k.split('.')))
        .collect();

    let mut functions: BTreeSet<usize> = BTreeSet::new();
    for &o in &owners {
        let anc = ancestors(o);
        for &a in &anc {
            let an = flat[a].node;
            if an.is_compound() && a != 0 {
                connected.push(head(an));
            }
            if matches!(an.kind, NodeKind::FunctionDef | NodeKind::ModifierDef) {
                functions.insert(a);
                break;
            }
        }
        if matches!(flat[o].node.kind, NodeKind::FunctionDef | NodeKind::ModifierDef) {
            functions.insert(o);
        }
    }

    for &f in &functions {
        let fnode = flat[f].node;
        if fnode
            .params
            .iter()
            .any(|p| names.contains(p.as_str()) || keyword_names.contains(p.as_str()))
        {
            connected.push(head(fnode));
        }
        let mut stmts = Vec::new();
        for c in &fnode.children {
            c.walk(&mut |n| {
                if n.kind == NodeKind::Statement {
                    stmts.push(n);
                }
            });
        }
        for s in stmts {
            if owners.iter().any(|&o| std::ptr::eq(flat[o].node, s)) {
                continue;
            }
            let region = if s.is_compound() { head(s) } else { full(s) };
            let declares = s.declares.iter().any(|d| names.contains(d.as_str()));
            let initialises = s.span.end_line < line && s.assigns.iter().any(|d| names.contains(d.as_str()));
            if declares || initialises {
                connected.push(region);
            }
            let mentions = s.declares.iter().any(|d| keyword_names.contains(d.as_str()))
                || (!s.is_compound() && keywords.iter().any(|k| s.identifiers.contains(k)));
            if mentions {
                keyword_hits.push(region);
            }
        }
    }

    // contract-level and file-level declarations
    for (i, entry) in flat.iter().enumerate() {
        let n = entry.node;
        let parent_kind = entry.parent.map(|p| flat[p].node.kind);
        let member = i != 0
            && (entry.parent == Some(0)
                || parent_kind == Some(NodeKind::ContractDef)
                || parent_kind == Some(NodeKind::StructDef));
        if !member || n.kind == NodeKind::Statement || n.kind == NodeKind::Pragma {
            continue;
        }
        let Some(name) = n.name.as_deref() else { continue };
        let region = match n.kind {
            NodeKind::StateVarDecl | NodeKind::EventDef => full(n),
            _ => head(n),
        };
        let in_struct = parent_kind == Some(NodeKind::StructDef);
        let add = |list: &mut Vec<Region>| {
            list.push(region);
            if in_struct {
                if let Some(p) = entry.parent {
                    list.push(head(flat[p].node));
                }
            }
        };
        if names.contains(name) && !owners.contains(&i) {
            add(&mut connected);
        }
        if n.declares_name(name) && keyword_names.contains(name) && !owners.contains(&i) {
            add(&mut keyword_hits);
        }
    }

    // 4. pragmas
    let pragmas: Vec<Region> = root
        .children
        .iter()
        .filter(|c| c.kind == NodeKind::Pragma)
        .map(full)
        .collect();

    // 5. assemble under the size cap: anchors and pragmas always, then
    // keyword matches, then purely structural neighbours.
    let mut chosen: Vec<Region> = anchors.iter().chain(&pragmas).copied().collect();
    for group in [&keyword_hits, &connected] {
        let mut candidate = chosen.clone();
        candidate.extend(group.iter().copied());
        if total_lines(&candidate) <= MAX_SLICE_LINES {
            chosen = candidate;
            continue;
        }
        let mut sorted = group.to_vec();
        sorted.sort_by_key(|&(a, b)| (b - a, a));
        for r in sorted {
            let mut next = chosen.clone();
            next.push(r);
            if total_lines(&next) <= MAX_SLICE_LINES {
                chosen = next;
            }
        }
    }

    let snippets: Vec<Snippet> = merge(chosen).into_iter().map(|r| idx.snippet(r)).collect();
    let covers = snippets.iter().any(|s| s.span.contains_line(line));
    CodeSlice {
        snippets,
        error_keywords: keywords.to_vec(),
        covers_error_line: covers,
        error_line: Some(line),
        whole_file: false,
    }
}

fn header_identifiers(n: &AstNode) -> BTreeSet<String> {
    let mut ids = BTreeSet::new();
    ids.extend(n.params.iter().cloned());
    if let Some(name) = &n.name {
        ids.insert(name.clone());
    }
    ids
}

fn collect_hits(flat: &[Flat<'_>], i: usize, line: u32, col: Option<u32>, out: &mut Vec<usize>) {
    let children: Vec<usize> = (i + 1..flat.len())
        .filter(|&c| flat[c].parent == Some(i) && flat[c].node.span.contains_line(line))
        .collect();
    if children.is_empty() {
        out.push(i);
        return;
    }
    let narrowed: Vec<usize> = match col {
        Some(c) => children
            .iter()
            .copied()
            .filter(|&ch| flat[ch].node.span.contains(line, c))
            .collect(),
        None => Vec::new(),
    };
    let pick = if narrowed.is_empty() { children } else { narrowed };
    for c in pick {
        collect_hits(flat, c, line, col, out);
    }
}
