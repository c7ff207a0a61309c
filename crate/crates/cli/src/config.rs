//! `solfix.toml` settings. Command-line flags (and their environment
//! variables, which clap folds in) win over the file, which wins over
//! built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

pub const CONFIG_FILE: &str = "solfix.toml";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub compilers: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
    pub template: Option<PathBuf>,
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub repair: RepairSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub embedding_model: Option<String>,
    pub max_in_flight: Option<usize>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepairSection {
    pub max_iterations: Option<u32>,
    pub granularity: Option<String>,
    pub k_knowledge: Option<usize>,
    pub prompt_budget: Option<usize>,
    pub weight_code: Option<f64>,
    pub parallelism: Option<usize>,
}

impl FileConfig {
    /// Reads `explicit`, or `./solfix.toml` when present. Relative paths in
    /// the file are resolved against its directory.
    pub fn discover(explicit: Option<&Path>) -> Result<(Self, Option<PathBuf>)> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let p = PathBuf::from(CONFIG_FILE);
                if !p.is_file() {
                    return Ok((FileConfig::default(), None));
                }
                p
            }
        };
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for p in [&mut cfg.compilers, &mut cfg.kb, &mut cfg.workdir, &mut cfg.template]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok((cfg, Some(path)))
    }
}

/// Default compiler table location when nothing else names one.
pub fn default_compilers() -> Option<PathBuf> {
    let p = PathBuf::from("tools/compilers.toml");
    p.is_file().then_some(p)
}

pub fn default_workdir() -> PathBuf {
    std::env::temp_dir().join("solfix")
}
