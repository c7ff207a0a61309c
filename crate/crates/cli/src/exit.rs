//! Process exit codes, one per error family.

use std::fmt;

use solfix::compiler::CompileError;
use solfix::dataset::DatasetError;
use solfix::knowledge::KbError;
use solfix::llm::LlmError;
use solfix::metrics::MetricsError;
use solfix::patch::PatchError;
use solfix::prompt::PromptError;
use solfix::retriever::RetrieveError;

pub const OK: u8 = 0;
/// The repair ran but the contract still does not compile.
pub const NOT_FIXED: u8 = 1;
pub const USAGE: u8 = 2;
pub const IO: u8 = 3;
pub const ENVIRONMENT: u8 = 4;
pub const DATA_FORMAT: u8 = 5;
pub const PROVIDER: u8 = 6;
pub const PATCH_NO_EDITS: u8 = 10;
pub const PATCH_MALFORMED: u8 = 11;
pub const PATCH_NOT_FOUND: u8 = 12;
pub const PATCH_AMBIGUOUS: u8 = 13;

/// Bad arguments detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn classify(e: &(dyn std::error::Error + 'static)) -> Option<u8> {
    if e.is::<UsageError>() {
        return Some(USAGE);
    }
    if let Some(p) = e.downcast_ref::<PatchError>() {
        return Some(match p {
            PatchError::NoEditsFound => PATCH_NO_EDITS,
            PatchError::MalformedBlock { .. } => PATCH_MALFORMED,
            PatchError::SearchNotFound { .. } => PATCH_NOT_FOUND,
            PatchError::AmbiguousMatch { .. } => PATCH_AMBIGUOUS,
        });
    }
    if let Some(k) = e.downcast_ref::<KbError>() {
        return Some(match k {
            KbError::IoFailure { .. } => IO,
            _ => DATA_FORMAT,
        });
    }
    if let Some(r) = e.downcast_ref::<RetrieveError>() {
        return Some(match r {
            RetrieveError::InvalidK | RetrieveError::InvalidParams => USAGE,
            RetrieveError::BackendUnavailable(_) => PROVIDER,
            _ => DATA_FORMAT,
        });
    }
    if let Some(d) = e.downcast_ref::<DatasetError>() {
        return Some(match d {
            DatasetError::Io { .. } => IO,
            DatasetError::Invalid { .. } => DATA_FORMAT,
        });
    }
    if let Some(p) = e.downcast_ref::<PromptError>() {
        return Some(match p {
            PromptError::TemplateIo { .. } => IO,
            _ => DATA_FORMAT,
        });
    }
    if e.is::<MetricsError>() || e.is::<serde_json::Error>() {
        return Some(DATA_FORMAT);
    }
    if e.is::<CompileError>() {
        return Some(ENVIRONMENT);
    }
    if e.is::<LlmError>() {
        return Some(PROVIDER);
    }
    if e.is::<std::io::Error>() {
        return Some(IO);
    }
    None
}

/// Exit code for the first error in the chain that has a known family.
pub fn code_for(err: &anyhow::Error) -> u8 {
    err.chain().find_map(classify).unwrap_or(IO)
}
