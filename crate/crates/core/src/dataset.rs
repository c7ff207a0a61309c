//! Repair dataset instances (line-delimited JSON).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::ErrorCategory;
use crate::version;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInstance {
    /// Job name; also the mock transcript file stem.
    pub id: String,
    pub breaking_change_id: String,
    pub source_version: String,
    pub target_version: String,
    pub error_contract: String,
    /// The repaired contract text.
    pub groundtruth_patch: String,
    pub error_category: ErrorCategory,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path} line {line}: {reason}")]
    Invalid { path: String, line: usize, reason: String },
}

impl DatasetInstance {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.error_contract == self.groundtruth_patch {
            return Err(format!("instance `{}`: error contract equals its groundtruth", self.id));
        }
        if !version::is_upgrade(&self.source_version, &self.target_version) {
            return Err(format!(
                "instance `{}`: {} -> {} is not an upgrade",
                self.id, self.source_version, self.target_version
            ));
        }
        Ok(())
    }
}

pub fn parse_jsonl(text: &str, origin: &str) -> Result<Vec<DatasetInstance>, DatasetError> {
    let mut out: Vec<DatasetInstance> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |reason: String| DatasetError::Invalid {
            path: origin.to_string(),
            line: i + 1,
            reason,
        };
        let inst: DatasetInstance = serde_json::from_str(line).map_err(|e| invalid(e.to_string()))?;
        inst.validate().map_err(invalid)?;
        if out.iter().any(|o| o.id == inst.id) {
            return Err(invalid(format!("duplicate id `{}`", inst.id)));
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<DatasetInstance>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn to_jsonl(instances: &[DatasetInstance]) -> String {
    instances
        .iter()
        .map(|i| serde_json::to_string(i).expect("serialisable") + "\n")
        .collect()
}
