//! Invoking `solc` and turning its human-readable output into classified
//! diagnostics.
//!
//! Compilers are resolved through a [`CompilerTable`] mapping version
//! prefixes (`"0.8"`, `"0.8.23"`) to executables. Any executable that accepts
//! `<exe> <file.sol>` and reports errors in solc's text layout works,
//! including the solcjs shim shipped under `tools/solcjs`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{LazyLock, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::version::Version;

/// Environment variable naming the compiler table file.
pub const COMPILERS_ENV: &str = "SOLFIX_COMPILERS";

/// Per-invocation wall-clock limit.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    Parser,
    Declaration,
    Syntax,
    Type,
    JsonError,
    IoError,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 7] = [
        ErrorCategory::Parser,
        ErrorCategory::Declaration,
        ErrorCategory::Syntax,
        ErrorCategory::Type,
        ErrorCategory::JsonError,
        ErrorCategory::IoError,
        ErrorCategory::Other,
    ];

    /// Errors in the contract itself: the categories a repair can fix.
    pub fn is_compilation(self) -> bool {
        matches!(
            self,
            ErrorCategory::Parser | ErrorCategory::Declaration | ErrorCategory::Syntax | ErrorCategory::Type
        )
    }

    /// Errors raised by the compiler's command-line / JSON interface.
    pub fn is_cli(self) -> bool {
        matches!(self, ErrorCategory::JsonError | ErrorCategory::IoError)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Parser => "Parser",
            ErrorCategory::Declaration => "Declaration",
            ErrorCategory::Syntax => "Syntax",
            ErrorCategory::Type => "Type",
            ErrorCategory::JsonError => "JsonError",
            ErrorCategory::IoError => "IoError",
            ErrorCategory::Other => "Other",
        }
    }

    /// The compiler's header token for this category.
    pub fn compiler_prefix(self) -> &'static str {
        match self {
            ErrorCategory::Parser => "ParserError",
            ErrorCategory::Declaration => "DeclarationError",
            ErrorCategory::Syntax => "SyntaxError",
            ErrorCategory::Type => "TypeError",
            ErrorCategory::JsonError => "JSONError",
            ErrorCategory::IoError => "IOError",
            ErrorCategory::Other => "Error",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ErrorCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let lower = lower.strip_suffix("error").unwrap_or(&lower);
        Ok(match lower {
            "parser" => ErrorCategory::Parser,
            "declaration" => ErrorCategory::Declaration,
            "syntax" => ErrorCategory::Syntax,
            "type" => ErrorCategory::Type,
            "json" => ErrorCategory::JsonError,
            "io" => ErrorCategory::IoError,
            "other" => ErrorCategory::Other,
            _ => return Err(format!("unknown error category `{s}`")),
        })
    }
}

/// Where the compiler pointed. Line and column are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLocation {
    pub file: String,
    pub line: u32,
    pub column: u32,
}

impl SourceLocation {
    /// Returns `None` for a zero line or column; positions are 1-based.
    pub fn new(file: impl Into<String>, line: u32, column: u32) -> Option<Self> {
        (line >= 1 && column >= 1).then(|| SourceLocation {
            file: file.into(),
            line,
            column,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub category: ErrorCategory,
    /// Header line including the compiler's type prefix, e.g.
    /// `TypeError: "send" and "transfer" are only available ...`.
    pub message: String,
    pub location: Option<SourceLocation>,
    /// The flagged source line as quoted by the compiler; may be empty.
    #[serde(default)]
    pub source_excerpt: String,
    /// Width of the caret underline, when the compiler drew one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caret_len: Option<u32>,
}

impl Diagnostic {
    pub fn new(message: impl Into<String>) -> Self {
        let message = message.into();
        Diagnostic {
            category: classify(&message),
            message,
            location: None,
            source_excerpt: String::new(),
            caret_len: None,
        }
    }

    pub fn at(mut self, file: &str, line: u32, column: u32) -> Self {
        self.location = SourceLocation::new(file, line, column);
        self
    }

    pub fn with_excerpt(mut self, excerpt: impl Into<String>, caret_len: Option<u32>) -> Self {
        self.source_excerpt = excerpt.into();
        self.caret_len = caret_len;
        self
    }

    pub fn line(&self) -> Option<u32> {
        self.location.as_ref().map(|l| l.line)
    }

    pub fn column(&self) -> Option<u32> {
        self.location.as_ref().map(|l| l.column)
    }

    /// The message without the `TypeError: ` style prefix.
    pub fn body(&self) -> &str {
        match HEADER_RE.captures(&self.message) {
            Some(c) => c.get(2).map_or("", |m| m.as_str()),
            None => &self.message,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileResult {
    pub success: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub compiler_version: String,
    pub raw_output: String,
}

impl CompileResult {
    /// Builds a result from raw compiler output, deriving `success` from the
    /// parsed diagnostics.
    pub fn from_output(compiler_version: impl Into<String>, raw_output: String) -> Self {
        let diagnostics = parse_diagnostics(&raw_output);
        CompileResult {
            success: !diagnostics.iter().any(|d| d.category.is_compilation()),
            diagnostics,
            compiler_version: compiler_version.into(),
            raw_output,
        }
    }

    /// The first diagnostic a repair should target.
    pub fn first_error(&self) -> Option<&Diagnostic> {
        self.diagnostics
            .iter()
            .find(|d| d.category.is_compilation())
            .or_else(|| self.diagnostics.first())
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.category.is_compilation())
    }
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("no compiler configured for version `{0}`")]
    CompilerNotFound(String),
    #[error("compiler process failed: {0}")]
    ProcessFailure(String),
    #[error("cannot compile an empty source")]
    EmptySource,
    #[error("invalid compiler table {path}: {reason}")]
    BadTable { path: PathBuf, reason: String },
}

static HEADER_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^([A-Z][A-Za-z]*Error|Error|Warning|Info|UnimplementedFeatureError|Exception): ?(.*)$").unwrap()
});
// solc <= 0.6 prints `file:line:col: Kind: message` on one line.
static LEGACY_HEADER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(.+?):(\d+):(\d+): ([A-Z][A-Za-z]*Error|Error|Warning|Info): ?(.*)$").unwrap());
static LEGACY_FILE_HEADER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\S[^:]*): (Warning|Info): ?(.*)$").unwrap());
static GUTTER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*-->\s*(.+?):(\d+):(\d+):?\s*$").unwrap());
static GUTTER_FILE_ONLY_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*-->\s*(\S.*?)\s*$").unwrap());
static SOURCE_LINE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\d+)\s*\|(?: (.*)|)$").unwrap());
static CARET_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\|\s*(\^+)").unwrap());
static LEGACY_CARET_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\^(?:-*\^)?)\s*$").unwrap());

/// Maps a compiler message to its category by the leading type token.
pub fn classify(message: &str) -> ErrorCategory {
    let text = message.trim_start();
    let prefix: String = text.chars().take_while(|c| c.is_ascii_alphanumeric()).collect();
    let rest = &text[prefix.len()..];
    if !rest.starts_with(':') {
        return ErrorCategory::Other;
    }
    match prefix.as_str() {
        "ParserError" => ErrorCategory::Parser,
        "DeclarationError" => ErrorCategory::Declaration,
        "SyntaxError" => ErrorCategory::Syntax,
        "TypeError" => ErrorCategory::Type,
        "JSONError" | "JsonError" => ErrorCategory::JsonError,
        "IOError" | "IoError" => ErrorCategory::IoError,
        "Error" => {
            let lower = rest.to_ascii_lowercase();
            if lower.contains("json") {
                ErrorCategory::JsonError
            } else if lower.contains("not found") || lower.contains("import") {
                ErrorCategory::IoError
            } else {
                ErrorCategory::Other
            }
        }
        _ => ErrorCategory::Other,
    }
}

enum Header {
    Modern {
        kind: String,
        message: String,
    },
    Legacy {
        location: Option<SourceLocation>,
        kind: String,
        message: String,
    },
}

fn parse_header(line: &str) -> Option<Header> {
    if let Some(c) = HEADER_RE.captures(line) {
        return Some(Header::Modern {
            kind: c[1].to_string(),
            message: line.trim_end().to_string(),
        });
    }
    if let Some(c) = LEGACY_HEADER_RE.captures(line) {
        let location = SourceLocation::new(&c[1], c[2].parse().unwrap_or(0), c[3].parse().unwrap_or(0));
        return Some(Header::Legacy {
            location,
            kind: c[4].to_string(),
            message: format!("{}: {}", &c[4], c[5].trim_end()),
        });
    }
    if let Some(c) = LEGACY_FILE_HEADER_RE.captures(line) {
        return Some(Header::Legacy {
            location: None,
            kind: c[2].to_string(),
            message: format!("{}: {}", &c[2], c[3].trim_end()),
        });
    }
    None
}

fn is_success_banner(line: &str) -> bool {
    let l = line.trim();
    l.is_empty() || l.starts_with("Compiler run successful")
}

fn is_informational(kind: &str) -> bool {
    kind == "Warning" || kind == "Info"
}

/// Parses solc's human-readable output into one [`Diagnostic`] per error
/// block, in output order.
///
/// Warning and info blocks are recognised and skipped. Text that is not part
/// of any recognised block becomes an [`ErrorCategory::Other`] diagnostic
/// carrying the whole text as its message.
pub fn parse_diagnostics(raw_output: &str) -> Vec<Diagnostic> {
    let lines: Vec<&str> = raw_output.lines().collect();
    let mut out = Vec::new();
    let mut orphan: Vec<&str> = Vec::new();
    let mut i = 0;

    let flush_orphan = |orphan: &mut Vec<&str>, out: &mut Vec<Diagnostic>| {
        if orphan.iter().any(|l| !is_success_banner(l)) {
            let text = orphan.join("\n").trim().to_string();
            out.push(Diagnostic {
                category: ErrorCategory::Other,
                message: text,
                location: None,
                source_excerpt: String::new(),
                caret_len: None,
            });
        }
        orphan.clear();
    };

    while i < lines.len() {
        let Some(header) = parse_header(lines[i]) else {
            // Gutter/source lines of a skipped block never reach here; this is
            // free text outside any block.
            orphan.push(lines[i]);
            i += 1;
            continue;
        };
        flush_orphan(&mut orphan, &mut out);
        let start = i + 1;
        let mut end = start;
        while end < lines.len() && parse_header(lines[end]).is_none() {
            end += 1;
        }
        let body = &lines[start..end];
        i = end;

        match header {
            Header::Modern { kind, message } => {
                if is_informational(&kind) {
                    continue;
                }
                out.push(parse_modern_block(message, body));
            }
            Header::Legacy {
                location,
                kind,
                message,
            } => {
                if is_informational(&kind) {
                    continue;
                }
                out.push(parse_legacy_block(message, location, body));
            }
        }
    }
    flush_orphan(&mut orphan, &mut out);
    out
}

fn parse_modern_block(message: String, body: &[&str]) -> Diagnostic {
    let mut location = None;
    let mut excerpt = String::new();
    let mut caret_len = None;
    let mut seen_gutter = false;
    for line in body {
        if !seen_gutter {
            if let Some(c) = GUTTER_RE.captures(line) {
                location = SourceLocation::new(c[1].trim(), c[2].parse().unwrap_or(0), c[3].parse().unwrap_or(0));
                seen_gutter = true;
                continue;
            }
            if GUTTER_FILE_ONLY_RE.is_match(line) {
                seen_gutter = true;
                continue;
            }
        }
        // Only the primary snippet; secondary `Note:` locations are ignored.
        if seen_gutter && excerpt.is_empty() && caret_len.is_none() {
            if let Some(c) = SOURCE_LINE_RE.captures(line) {
                excerpt = c.get(2).map_or("", |m| m.as_str()).to_string();
                continue;
            }
        }
        if seen_gutter && caret_len.is_none() {
            if let Some(c) = CARET_RE.captures(line) {
                caret_len = Some(c[1].len() as u32);
            }
        }
    }
    Diagnostic {
        category: classify(&message),
        message,
        location,
        source_excerpt: excerpt,
        caret_len,
    }
}

fn parse_legacy_block(message: String, location: Option<SourceLocation>, body: &[&str]) -> Diagnostic {
    let mut excerpt = String::new();
    let mut caret_len = None;
    let mut rest = body.iter();
    if let Some(first) = rest.next() {
        if !LEGACY_CARET_RE.is_match(first) {
            excerpt = first.to_string();
            if let Some(next) = rest.next() {
                if let Some(c) = LEGACY_CARET_RE.captures(next) {
                    caret_len = Some(c[1].len() as u32);
                }
            }
        }
    }
    Diagnostic {
        category: classify(&message),
        message,
        location,
        source_excerpt: excerpt,
        caret_len,
    }
}

/// Renders a diagnostic in solc's modern text layout.
pub fn render_diagnostic(diag: &Diagnostic) -> String {
    let mut out = String::new();
    out.push_str(&diag.message);
    out.push('\n');
    if let Some(loc) = &diag.location {
        let num = loc.line.to_string();
        let pad = " ".repeat(num.len());
        out.push_str(&format!("{pad} --> {}:{}:{}:\n", loc.file, loc.line, loc.column));
        if !diag.source_excerpt.is_empty() {
            out.push_str(&format!("{pad} |\n"));
            out.push_str(&format!("{num} | {}\n", diag.source_excerpt));
            if let Some(len) = diag.caret_len {
                let indent = " ".repeat(loc.column.saturating_sub(1) as usize);
                out.push_str(&format!("{pad} | {indent}{}\n", "^".repeat(len as usize)));
            }
        }
    }
    out
}

/// Version prefix → compiler executable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompilerTable {
    entries: BTreeMap<String, PathBuf>,
}

#[derive(Deserialize)]
struct TableFile {
    #[serde(default)]
    compilers: BTreeMap<String, PathBuf>,
}

impl CompilerTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, version: impl Into<String>, exe: impl Into<PathBuf>) {
        self.entries.insert(version.into(), exe.into());
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Path)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_path()))
    }

    /// Reads a TOML table of the form `[compilers] "0.8" = "/path/to/solc"`.
    /// Relative paths are resolved against the table's directory.
    pub fn load(path: &Path) -> Result<Self, CompileError> {
        let text = std::fs::read_to_string(path).map_err(|e| CompileError::BadTable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let parsed: TableFile = toml::from_str(&text).map_err(|e| CompileError::BadTable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut table = CompilerTable::new();
        for (version, exe) in parsed.compilers {
            let exe = if exe.is_relative() { base.join(exe) } else { exe };
            table.insert(version, exe);
        }
        Ok(table)
    }

    /// Loads the table named by `SOLFIX_COMPILERS`, falling back to
    /// `default_path` when the variable is unset.
    pub fn from_env_or(default_path: Option<&Path>) -> Result<Self, CompileError> {
        match std::env::var_os(COMPILERS_ENV) {
            Some(p) => Self::load(Path::new(&p)),
            None => match default_path {
                Some(p) => Self::load(p),
                None => Ok(Self::new()),
            },
        }
    }

    /// Resolves `version` to `(matched key, executable)`. The most specific
    /// key that is a prefix of `version` wins; failing that, the newest key
    /// that `version` is a prefix of (so `0.8` can resolve to `0.8.23`).
    pub fn resolve(&self, version: &str) -> Option<(&str, &Path)> {
        let wanted = Version::parse(version)?;
        let mut parsed: Vec<(Version, &str, &Path)> = self
            .entries
            .iter()
            .filter_map(|(k, p)| Version::parse(k).map(|v| (v, k.as_str(), p.as_path())))
            .collect();
        parsed.sort_by(|a, b| a.0.cmp(&b.0));
        let narrower = parsed
            .iter()
            .filter(|(v, _, _)| v.is_prefix_of(&wanted))
            .max_by_key(|(v, _, _)| v.components().len());
        if let Some((_, k, p)) = narrower {
            return Some((k, p));
        }
        parsed
            .iter()
            .rev()
            .find(|(v, _, _)| wanted.is_prefix_of(v))
            .map(|(_, k, p)| (*k, *p))
    }
}

/// Anything that can compile a single Solidity file for a target version.
pub trait Compiler: Send + Sync {
    fn compile_file(
        &self,
        file_name: &str,
        source: &str,
        target_version: &str,
        workdir: &Path,
    ) -> Result<CompileResult, CompileError>;

    fn compile(&self, source: &str, target_version: &str, workdir: &Path) -> Result<CompileResult, CompileError> {
        self.compile_file("contract.sol", source, target_version, workdir)
    }

    /// Fails fast when no compiler exists for `target_version`.
    fn check_available(&self, target_version: &str) -> Result<(), CompileError>;
}

/// Runs a solc-compatible executable as a child process.
#[derive(Debug, Clone)]
pub struct SolcGateway {
    table: CompilerTable,
    timeout: Duration,
}

impl SolcGateway {
    pub fn new(table: CompilerTable) -> Self {
        SolcGateway {
            table,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn table(&self) -> &CompilerTable {
        &self.table
    }
}

impl Compiler for SolcGateway {
    fn check_available(&self, target_version: &str) -> Result<(), CompileError> {
        self.table
            .resolve(target_version)
            .map(|_| ())
            .ok_or_else(|| CompileError::CompilerNotFound(target_version.to_string()))
    }

    fn compile_file(
        &self,
        file_name: &str,
        source: &str,
        target_version: &str,
        workdir: &Path,
    ) -> Result<CompileResult, CompileError> {
        let (key, exe) = self
            .table
            .resolve(target_version)
            .ok_or_else(|| CompileError::CompilerNotFound(target_version.to_string()))?;
        if source.trim().is_empty() {
            return Err(CompileError::EmptySource);
        }
        std::fs::create_dir_all(workdir)
            .map_err(|e| CompileError::ProcessFailure(format!("cannot create {}: {e}", workdir.display())))?;
        std::fs::write(workdir.join(file_name), source)
            .map_err(|e| CompileError::ProcessFailure(format!("cannot write source: {e}")))?;

        let mut child = Command::new(exe)
            .arg(file_name)
            .current_dir(workdir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| CompileError::ProcessFailure(format!("cannot spawn {}: {e}", exe.display())))?;

        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.read_to_end(&mut buf);
            buf
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });

        let status = match child.wait_timeout(self.timeout) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(CompileError::ProcessFailure(format!(
                    "compiler timed out after {}s",
                    self.timeout.as_secs()
                )));
            }
            Err(e) => return Err(CompileError::ProcessFailure(e.to_string())),
        };
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();

        if status.code().is_none() {
            return Err(CompileError::ProcessFailure("compiler terminated by signal".into()));
        }
        let mut raw = String::from_utf8_lossy(&stderr).into_owned();
        raw.push_str(&String::from_utf8_lossy(&stdout));

        // Family keys like "0.8" usually alias a fully versioned entry.
        let version = self
            .table
            .entries()
            .filter(|(_, p)| *p == exe)
            .filter_map(|(k, _)| Version::parse(k).map(|v| (v.components().len(), k)))
            .max()
            .map_or(key, |(_, k)| k);
        let result = CompileResult::from_output(version, raw);
        if !status.success() && result.diagnostics.is_empty() {
            return Err(CompileError::ProcessFailure(format!(
                "compiler exited with {status} without diagnostics"
            )));
        }
        Ok(result)
    }
}

/// Memoises results of another compiler by (file name, version, source).
///
/// Compilation is deterministic, so repeated runs over the same inputs (the
/// iteration-cap sweep) can reuse earlier results. Sources are not written
/// to the workdir on a cache hit.
pub struct CachedCompiler<C> {
    inner: C,
    cache: Mutex<HashMap<(String, String, String), CompileResult>>,
}

impl<C: Compiler> CachedCompiler<C> {
    pub fn new(inner: C) -> Self {
        CachedCompiler {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.lock().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<C: Compiler> Compiler for CachedCompiler<C> {
    fn compile_file(
        &self,
        file_name: &str,
        source: &str,
        target_version: &str,
        workdir: &Path,
    ) -> Result<CompileResult, CompileError> {
        let key = (file_name.to_string(), target_version.to_string(), source.to_string());
        if let Some(hit) = self.cache.lock().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(hit);
        }
        let result = self.inner.compile_file(file_name, source, target_version, workdir)?;
        if let Ok(mut c) = self.cache.lock() {
            c.insert(key, result.clone());
        }
        Ok(result)
    }

    fn check_available(&self, target_version: &str) -> Result<(), CompileError> {
        self.inner.check_available(target_version)
    }
}
