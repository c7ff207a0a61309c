//! SEARCH/REPLACE edit blocks: parsing model output and applying edits to a
//! source buffer on whole-line boundaries.
//!
//! ```text
//! <<<<<< SEARCH
//!         guessHistory.player = msg.sender;
//! =======
//!         guessHistory.player = payable(msg.sender);
//! >>>>>> REPLACE
//! ```
//!
//! Marker lines may repeat their character 6 to 8 times.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SEARCH_MARKER: &str = "<<<<<< SEARCH";
pub const DIVIDER: &str = "=======";
pub const REPLACE_MARKER: &str = ">>>>>> REPLACE";

static SEARCH_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*<{6,8}\s*SEARCH\s*$").unwrap());
static DIVIDER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*={6,8}\s*$").unwrap());
static REPLACE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*>{6,8}\s*REPLACE\s*$").unwrap());
static GUTTER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\d+ \|(?: |$)").unwrap());

/// One edit; both sides are lines without terminators. An empty `replace`
/// deletes the matched lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub search: Vec<String>,
    pub replace: Vec<String>,
}

impl Edit {
    pub fn new<S: AsRef<str>>(search: &[S], replace: &[S]) -> Self {
        Edit {
            search: search.iter().map(|s| s.as_ref().to_string()).collect(),
            replace: replace.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSet {
    pub edits: Vec<Edit>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum PatchError {
    #[error("no SEARCH/REPLACE block found in the response")]
    NoEditsFound,
    #[error("malformed SEARCH/REPLACE block at byte {offset}: {reason}")]
    MalformedBlock { offset: usize, reason: String },
    #[error("edit {edit}: SEARCH lines not found in the source{}", nearest_note(.nearest))]
    SearchNotFound {
        edit: usize,
        nearest: Option<(u32, String)>,
    },
    #[error("edit {edit}: SEARCH lines occur {count} times; include more context to make them unique")]
    AmbiguousMatch { edit: usize, count: usize },
}

fn nearest_note(nearest: &Option<(u32, String)>) -> String {
    match nearest {
        Some((line, text)) => format!(" (closest line {line}: `{}`)", text.trim()),
        None => String::new(),
    }
}

#[derive(PartialEq)]
enum State {
    Outside,
    Search(usize),
    Replace(usize),
}

fn strip_gutters(lines: Vec<String>) -> Vec<String> {
    if !lines.is_empty() && lines.iter().all(|l| GUTTER_RE.is_match(l)) {
        lines
            .into_iter()
            .map(|l| GUTTER_RE.replace(&l, "").into_owned())
            .collect()
    } else {
        lines
    }
}

pub fn parse_patch(raw: &str) -> Result<PatchSet, PatchError> {
    let mut state = State::Outside;
    let mut search: Vec<String> = Vec::new();
    let mut replace: Vec<String> = Vec::new();
    let mut edits = Vec::new();
    let mut blocks = 0usize;
    let malformed = |offset: usize, reason: &str| PatchError::MalformedBlock {
        offset,
        reason: reason.to_string(),
    };

    let mut offset = 0;
    for raw_line in raw.split_inclusive('\n') {
        let here = offset;
        offset += raw_line.len();
        let line = raw_line.trim_end_matches('\n').trim_end_matches('\r');
        let is_search = SEARCH_RE.is_match(line);
        let is_divider = DIVIDER_RE.is_match(line);
        let is_replace = REPLACE_RE.is_match(line);
        match state {
            State::Outside => {
                if is_search {
                    state = State::Search(here);
                    search.clear();
                    replace.clear();
                }
            }
            State::Search(start) => {
                if is_divider {
                    state = State::Replace(start);
                } else if is_search || is_replace {
                    return Err(malformed(here, "expected divider before this marker"));
                } else {
                    search.push(line.to_string());
                }
            }
            State::Replace(start) => {
                if is_replace {
                    blocks += 1;
                    let s = strip_gutters(std::mem::take(&mut search));
                    let r = strip_gutters(std::mem::take(&mut replace));
                    if s.iter().all(|l| l.trim().is_empty()) {
                        return Err(malformed(start, "SEARCH section is empty"));
                    }
                    if s == r {
                        log::debug!("dropping no-op edit at byte {start}");
                    } else {
                        edits.push(Edit { search: s, replace: r });
                    }
                    state = State::Outside;
                } else if is_search || is_divider {
                    return Err(malformed(here, "expected REPLACE terminator before this marker"));
                } else {
                    replace.push(line.to_string());
                }
            }
        }
    }
    match state {
        State::Search(start) => Err(malformed(start, "block has no divider or REPLACE terminator")),
        State::Replace(start) => Err(malformed(start, "block has no REPLACE terminator")),
        State::Outside if edits.is_empty() => {
            if blocks > 0 {
                log::debug!("all {blocks} blocks were no-ops");
            }
            Err(PatchError::NoEditsFound)
        }
        State::Outside => Ok(PatchSet {
            edits,
            raw: raw.to_string(),
        }),
    }
}

/// Canonical text form; `parse_patch` reads it back to the same edits.
pub fn render_edits(edits: &[Edit]) -> String {
    let mut out = String::new();
    for e in edits {
        out.push_str(SEARCH_MARKER);
        out.push('\n');
        for l in &e.search {
            out.push_str(l);
            out.push('\n');
        }
        out.push_str(DIVIDER);
        out.push('\n');
        for l in &e.replace {
            out.push_str(l);
            out.push('\n');
        }
        out.push_str(REPLACE_MARKER);
        out.push('\n');
    }
    out
}

impl fmt::Display for PatchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_edits(&self.edits))
    }
}

/// A source line split from its terminator (`"\n"`, `"\r\n"` or `""`).
#[derive(Clone)]
struct Line<'a> {
    content: &'a str,
    term: &'a str,
}

fn split_lines(source: &str) -> Vec<Line<'_>> {
    source
        .split_inclusive('\n')
        .map(|l| {
            if let Some(c) = l.strip_suffix("\r\n") {
                Line {
                    content: c,
                    term: "\r\n",
                }
            } else if let Some(c) = l.strip_suffix('\n') {
                Line { content: c, term: "\n" }
            } else {
                Line { content: l, term: "" }
            }
        })
        .collect()
}

fn dominant_terminator(lines: &[Line<'_>]) -> &'static str {
    let crlf = lines.iter().filter(|l| l.term == "\r\n").count();
    let lf = lines.iter().filter(|l| l.term == "\n").count();
    if crlf > lf {
        "\r\n"
    } else {
        "\n"
    }
}

fn occurrences(lines: &[Line<'_>], search: &[String], eq: fn(&str, &str) -> bool) -> Vec<usize> {
    if search.is_empty() || search.len() > lines.len() {
        return Vec::new();
    }
    (0..=lines.len() - search.len())
        .filter(|&i| search.iter().zip(&lines[i..]).all(|(s, l)| eq(l.content, s)))
        .collect()
}

fn exact(a: &str, b: &str) -> bool {
    a == b
}

fn trailing_insensitive(a: &str, b: &str) -> bool {
    a.trim_end() == b.trim_end()
}

fn nearest_line(lines: &[Line<'_>], search: &[String]) -> Option<(u32, String)> {
    let probe = search.iter().find(|l| !l.trim().is_empty())?.trim();
    lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.content.trim().is_empty())
        .min_by_key(|(i, l)| (strsim::levenshtein(l.content.trim(), probe), *i))
        .map(|(i, l)| (i as u32 + 1, l.content.to_string()))
}

fn apply_with(patch: &PatchSet, source: &str, eq: fn(&str, &str) -> bool) -> Result<String, PatchError> {
    let mut buffer = source.to_string();
    for (n, edit) in patch.edits.iter().enumerate() {
        let lines = split_lines(&buffer);
        let found = occurrences(&lines, &edit.search, eq);
        let at = match found.len() {
            0 => {
                return Err(PatchError::SearchNotFound {
                    edit: n + 1,
                    nearest: nearest_line(&lines, &edit.search),
                })
            }
            1 => found[0],
            count => return Err(PatchError::AmbiguousMatch { edit: n + 1, count }),
        };
        let end = at + edit.search.len();
        let style = match lines[at].term {
            "" => dominant_terminator(&lines),
            t => t,
        };
        let last_term = lines[end - 1].term;
        let mut out = String::with_capacity(buffer.len());
        for l in &lines[..at] {
            out.push_str(l.content);
            out.push_str(l.term);
        }
        for (i, r) in edit.replace.iter().enumerate() {
            out.push_str(r);
            out.push_str(if i + 1 == edit.replace.len() { last_term } else { style });
        }
        for l in &lines[end..] {
            out.push_str(l.content);
            out.push_str(l.term);
        }
        buffer = out;
    }
    Ok(buffer)
}

/// Applies every edit in order; any failure leaves the caller's source as is.
pub fn apply(patch: &PatchSet, source: &str) -> Result<String, PatchError> {
    apply_with(patch, source, exact)
}

/// Like [`apply`], but lines compare equal when they differ only in
/// trailing whitespace.
pub fn apply_fallback_whitespace(patch: &PatchSet, source: &str) -> Result<String, PatchError> {
    apply_with(patch, source, trailing_insensitive)
}

/// Exact application, retried whitespace-insensitively on `SearchNotFound`.
pub fn apply_lenient(patch: &PatchSet, source: &str) -> Result<String, PatchError> {
    match apply(patch, source) {
        Err(PatchError::SearchNotFound { .. }) => {
            log::info!("exact SEARCH match failed; retrying ignoring trailing whitespace");
            apply_fallback_whitespace(patch, source)
        }
        other => other,
    }
}
