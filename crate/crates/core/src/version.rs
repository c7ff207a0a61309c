//! Solidity version strings and version-family ordering.

use std::cmp::Ordering;
use std::fmt;

/// A dotted numeric version such as `0.8`, `0.8.23` or `v0.6.x`.
///
/// Ordering is component-wise numeric; a shorter version that is a prefix of
/// a longer one sorts first (`0.8 < 0.8.0`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Version(Vec<u32>);

impl Version {
    /// Lenient parse: accepts a leading `v`/`^`/`~`/`=`, trailing `.x`/`.*`
    /// wildcards and `+commit...` build suffixes.
    pub fn parse(text: &str) -> Option<Self> {
        let s = text
            .trim()
            .trim_start_matches(['v', 'V', '^', '~', '=', '>', '<'])
            .trim();
        let s = s.split(['+', '-', ' ']).next().unwrap_or("");
        if s.is_empty() {
            return None;
        }
        let mut parts = Vec::new();
        for piece in s.split('.') {
            if piece == "x" || piece == "X" || piece == "*" {
                break;
            }
            parts.push(piece.parse::<u32>().ok()?);
        }
        if parts.is_empty() {
            None
        } else {
            Some(Version(parts))
        }
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    /// The `major.minor` family, e.g. `0.8.23` → `0.8`.
    pub fn family(&self) -> Version {
        Version(self.0.iter().copied().take(2).collect())
    }

    /// True when `self`'s components are a leading subsequence of `other`'s.
    pub fn is_prefix_of(&self, other: &Version) -> bool {
        self.0.len() <= other.0.len() && other.0[..self.0.len()] == self.0[..]
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        f.write_str(&parts.join("."))
    }
}

/// Compares two version-family strings; unparseable strings sort last and
/// compare lexically among themselves.
pub fn compare_families(a: &str, b: &str) -> Ordering {
    match (Version::parse(a), Version::parse(b)) {
        (Some(x), Some(y)) => x.family().cmp(&y.family()),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.cmp(b),
    }
}

/// True when `source` is strictly older than `target` as version families.
pub fn is_upgrade(source: &str, target: &str) -> bool {
    match (Version::parse(source), Version::parse(target)) {
        (Some(s), Some(t)) => s.family() < t.family(),
        _ => false,
    }
}
