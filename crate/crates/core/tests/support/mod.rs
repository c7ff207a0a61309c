//! Independent reference implementations shared by the integration tests
//! and the acceptance harness. Nothing here calls into the code under test
//! except to build inputs.
#![allow(dead_code)]

use std::collections::BTreeSet;

use solfix::knowledge::{KnowledgeEntry, KnowledgeStore};
use solfix::patch::Edit;
use solfix::retriever::Query;

/// xorshift64*; good enough for reproducible test inputs.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 ^= self.0 >> 12;
        self.0 ^= self.0 << 25;
        self.0 ^= self.0 >> 27;
        self.0.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[self.below(xs.len())]
    }
}

// ---- patches ----

pub const LINE_POOL: &[&str] = &[
    "pragma solidity ^0.8.0;",
    "contract A {",
    "}",
    "    uint x;",
    "    uint y = 2;",
    "    function f() public {",
    "        x = 1;",
    "        y += x;",
    "    }",
    "",
    "    // note",
    "        emit E(msg.sender);",
];

pub fn random_lines(rng: &mut Rng, max: usize) -> Vec<String> {
    let n = rng.below(max + 1);
    (0..n).map(|_| rng.pick(LINE_POOL).to_string()).collect()
}

pub fn join_lines(lines: &[String]) -> String {
    lines.iter().map(|l| format!("{l}\n")).collect()
}

/// Hunks of an LCS line diff as `(old_start, old_end, new_lines)`.
pub fn diff_hunks(old: &[String], new: &[String]) -> Vec<(usize, usize, Vec<String>)> {
    let (n, m) = (old.len(), new.len());
    let mut lcs = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if old[i] == new[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut hunks = Vec::new();
    let mut open: Option<(usize, Vec<String>)> = None;
    while i < n || j < m {
        if i < n && j < m && old[i] == new[j] {
            if let Some((start, lines)) = open.take() {
                hunks.push((start, i, lines));
            }
            i += 1;
            j += 1;
        } else if j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j]) {
            open.get_or_insert((i, Vec::new())).1.push(new[j].clone());
            j += 1;
        } else {
            open.get_or_insert((i, Vec::new()));
            i += 1;
        }
    }
    if let Some((start, lines)) = open {
        hunks.push((start, n, lines));
    }
    hunks
}

/// Brute-force count of `needle` as a contiguous run of lines.
pub fn occurrences(hay: &[String], needle: &[String]) -> usize {
    if needle.is_empty() || needle.len() > hay.len() {
        return 0;
    }
    (0..=hay.len() - needle.len())
        .filter(|&i| hay[i..i + needle.len()] == *needle)
        .count()
}

/// Edits for `old → new`, last hunk first, each search window widened with
/// context until it occurs exactly once and has a non-blank line. Falls back
/// to one whole-file edit when the remaining text is blank-only.
pub fn diff_to_edits(old: &[String], new: &[String]) -> Vec<Edit> {
    let mut current = old.to_vec();
    let mut edits = Vec::new();
    for (a, b, repl) in diff_hunks(old, new).into_iter().rev() {
        let (mut lo, mut hi) = (a, b);
        loop {
            let window = &current[lo..hi];
            if occurrences(&current, window) == 1 && window.iter().any(|l| !l.trim().is_empty()) {
                break;
            }
            if lo == 0 && hi == current.len() {
                return vec![Edit::new(old, new)];
            }
            lo = lo.saturating_sub(1);
            if hi < current.len() {
                hi += 1;
            }
        }
        let search = current[lo..hi].to_vec();
        let mut replace = current[lo..a].to_vec();
        replace.extend(repl.iter().cloned());
        replace.extend(current[b..hi].iter().cloned());
        current.splice(lo..hi, replace.iter().cloned());
        edits.push(Edit::new(&search, &replace));
    }
    assert_eq!(current, new);
    edits
}

// ---- metrics ----

/// Lowercased ASCII word runs and single punctuation characters.
pub fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_ascii_lowercase() || ch.is_ascii_digit() || ch == '_' {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Sentence BLEU-4, computed with naive n-gram lists.
pub fn oracle_bleu(candidate: &str, reference: &str) -> f64 {
    let c = oracle_tokens(candidate);
    let r = oracle_tokens(reference);
    let mut logs = 0.0;
    for n in 1..=4usize {
        let grams = |t: &[String]| -> Vec<Vec<String>> {
            if t.len() < n {
                Vec::new()
            } else {
                (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
            }
        };
        let cg = grams(&c);
        let mut rg = grams(&r);
        let p = if cg.is_empty() {
            if rg.is_empty() {
                1.0
            } else {
                1e-9
            }
        } else {
            // Clipping by consuming matched reference n-grams.
            let mut hits = 0;
            for g in &cg {
                if let Some(pos) = rg.iter().position(|x| x == g) {
                    rg.swap_remove(pos);
                    hits += 1;
                }
            }
            if hits == 0 {
                1e-9
            } else {
                hits as f64 / cg.len() as f64
            }
        };
        logs += 0.25 * p.ln();
    }
    let bp = if c.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    bp * logs.exp()
}

/// Textbook Levenshtein table over chars.
pub fn oracle_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

pub fn oracle_es(a: &str, b: &str) -> f64 {
    let m = a.chars().count().max(b.chars().count());
    if m == 0 {
        1.0
    } else {
        1.0 - oracle_levenshtein(a, b) as f64 / m as f64
    }
}

const SNIPPETS: &[&str] = &[
    "uint x = 1;",
    "address payable a;",
    "msg.sender",
    "function f() public {}",
    "return",
    "(",
    ")",
    "payable(x)",
    "emit",
    "E",
    ";",
    "+",
    "{",
    "}",
    "x",
    "y",
    "0x10",
    "wei",
    "now",
    "block.timestamp",
];

/// Random code-like text of `0..max` snippets separated by spaces or newlines.
pub fn random_code(rng: &mut Rng, max: usize) -> String {
    let n = rng.below(max);
    let mut s = String::new();
    for _ in 0..n {
        s.push_str(rng.pick(SNIPPETS));
        s.push(if rng.below(4) == 0 { '\n' } else { ' ' });
    }
    s
}

// ---- retrieval ----

/// Tokens with byte ranges, scanned by hand: identifier runs, joined by
/// dots into chains; a chain also yields each part.
pub fn oracle_terms(text: &str) -> Vec<(String, usize, usize)> {
    let b = text.as_bytes();
    let word = |c: u8| c.is_ascii_alphanumeric() || c == b'_' || c == b'$';
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if !word(b[i]) {
            i += 1;
            continue;
        }
        let start = i;
        let mut parts = Vec::new();
        loop {
            let ps = i;
            while i < b.len() && word(b[i]) {
                i += 1;
            }
            parts.push((ps, i));
            if i + 1 < b.len() && b[i] == b'.' && word(b[i + 1]) {
                i += 1;
            } else {
                break;
            }
        }
        out.push((text[start..i].to_lowercase(), start, i));
        if parts.len() > 1 {
            for (s, e) in parts {
                out.push((text[s..e].to_lowercase(), s, e));
            }
        }
    }
    out
}

/// Weighted BM25 by direct summation over the whole store.
pub fn oracle_bm25(store: &KnowledgeStore, query: &Query, weight_code: f64, version_boost: f64) -> Vec<f64> {
    let (k1, b) = (1.2, 0.75);
    let docs: Vec<Vec<(String, bool)>> = store
        .entries
        .iter()
        .map(|e| {
            oracle_terms(&e.text)
                .into_iter()
                .map(|(t, s, x)| {
                    let code = e.code_spans.iter().any(|&(a, z)| a <= s && x <= z);
                    (t, code)
                })
                .collect()
        })
        .collect();
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut terms: Vec<String> = Vec::new();
    for t in oracle_terms(&query.text).into_iter().map(|t| t.0).chain(
        query
            .code_tokens
            .iter()
            .flat_map(|c| oracle_terms(c).into_iter().map(|t| t.0)),
    ) {
        if !terms.contains(&t) {
            terms.push(t);
        }
    }
    let code_terms: BTreeSet<String> = query
        .code_tokens
        .iter()
        .flat_map(|c| oracle_terms(c).into_iter().map(|t| t.0))
        .collect();
    docs.iter()
        .zip(&store.entries)
        .map(|(doc, entry)| {
            let mut s = 0.0;
            for t in &terms {
                let df = docs.iter().filter(|d| d.iter().any(|(x, _)| x == t)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let prose = doc.iter().filter(|(x, c)| x == t && !c).count() as f64;
                let code = doc.iter().filter(|(x, c)| x == t && *c).count() as f64;
                let tf = prose + weight_code * code;
                if tf == 0.0 {
                    continue;
                }
                let qw = if code > 0.0 && code_terms.contains(t) {
                    weight_code
                } else {
                    1.0
                };
                let norm = 1.0 - b + b * doc.len() as f64 / avg;
                s += qw * idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
            let boosted = query.version_pair.as_ref().is_some_and(|(qs, qt)| {
                let fam = |v: &str| -> (u64, u64) {
                    let mut it = v.split('.').map(|p| p.parse::<u64>().unwrap());
                    (it.next().unwrap(), it.next().unwrap_or(0))
                };
                fam(qs) <= fam(&entry.source_version) && fam(&entry.target_version) <= fam(qt)
            });
            if boosted {
                s * version_boost
            } else {
                s
            }
        })
        .collect()
}

fn entry_with_code(src: &str, tgt: &str, text: &str, code: &[&str]) -> KnowledgeEntry {
    let spans = code
        .iter()
        .map(|c| {
            let a = text.find(c).expect("code fragment in text");
            (a, a + c.len())
        })
        .collect();
    KnowledgeEntry::new(src, tgt, text, spans).unwrap()
}

pub const PAYABLE_TEXT: &str =
    "Conversions from address to address payable are now possible via payable(x), where x must be of type address.";

/// A store where only the payable(x) entry has its distinguishing token in
/// code. A distractor sharing more prose with "implicitly convertible"
/// messages outranks it on those queries unless code is weighted up.
pub fn code_weighting_store() -> (KnowledgeStore, String) {
    let target = entry_with_code("0.5", "0.6", PAYABLE_TEXT, &["payable(x)"]);
    let id = target.id.clone();
    let entries = vec![
        target,
        KnowledgeEntry::new(
            "0.4",
            "0.5",
            "An address is not convertible to a contract type without an explicit conversion.",
            vec![],
        )
        .unwrap(),
        entry_with_code(
            "0.6",
            "0.7",
            "The global variable now is deprecated, block.timestamp should be used instead.",
            &["now", "block.timestamp"],
        ),
        entry_with_code(
            "0.4",
            "0.5",
            "The throw keyword is disallowed, use revert() instead.",
            &["throw", "revert()"],
        ),
        entry_with_code(
            "0.7",
            "0.8",
            "The type byte has been removed. It was an alias of bytes1.",
            &["byte", "bytes1"],
        ),
        KnowledgeEntry::new(
            "0.5",
            "0.6",
            "Variables declared inside a block are only visible from the point of declaration to the end of the block.",
            vec![],
        )
        .unwrap(),
    ];
    (KnowledgeStore::new(entries), id)
}

/// Twelve queries built the way the repair loop builds them: compiler text
/// plus the flagged source line as code tokens.
pub fn code_weighting_queries() -> Vec<Query> {
    let receivers = [
        "payout",
        "owner",
        "recipient",
        "beneficiary",
        "winner",
        "seller",
        "buyer",
        "treasury",
        "admin",
        "player",
        "bidder",
        "payee",
    ];
    receivers
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let msg = if i % 2 == 0 {
                "Type address is not implicitly convertible to expected type address payable."
            } else {
                "Invalid implicit conversion from address to address payable requested."
            };
            let excerpt = format!("address payable {r} = msg.sender;");
            Query::new(format!("TypeError: {msg}\n{excerpt}")).with_code_tokens(&[excerpt])
        })
        .collect()
}

/// A reference of random snippets and a mutated copy as candidate.
pub fn random_text_pair(rng: &mut Rng) -> (String, String) {
    let n = 4 + rng.below(30);
    let reference: Vec<&str> = (0..n).map(|_| *rng.pick(SNIPPETS)).collect();
    let mut candidate = Vec::new();
    for s in &reference {
        match rng.below(6) {
            0 => {}
            1 => candidate.push(*rng.pick(SNIPPETS)),
            2 => {
                candidate.push(*s);
                candidate.push(*rng.pick(SNIPPETS));
            }
            _ => candidate.push(*s),
        }
    }
    if candidate.is_empty() {
        candidate.push("x");
    }
    (candidate.join(" "), reference.join("\n"))
}
