//! The repair loop: compile, slice, retrieve, prompt, complete, patch,
//! recompile — until the contract compiles or the iteration cap is reached.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compiler::{CompileError, CompileResult, Compiler, Diagnostic};
use crate::knowledge::{sha256_hex, KnowledgeEntry};
use crate::llm::{LlmError, LlmProvider, LlmRequest};
use crate::patch::{self, PatchError};
use crate::prompt::{build_prompt, Granularity, Template, DEFAULT_BUDGET};
use crate::retriever::{clean_query, retrieve_with_fallback, EmbeddingBackend, RetrievalResult, Retriever};
use crate::slicer::{self, CodeSlice};

pub const DEFAULT_MAX_ITERATIONS: u32 = 5;
const CONTRACT_FILE: &str = "contract.sol";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairConfig {
    pub max_iterations: u32,
    pub granularity: Granularity,
    pub ablation_no_slicing: bool,
    pub ablation_no_retrieval: bool,
    pub k_knowledge: usize,
    pub target_version: String,
    pub source_version: Option<String>,
    /// Put every error of the compile run into the prompt, not just the first.
    pub all_errors: bool,
    pub prompt_budget: usize,
    /// Model name passed to the provider; empty means the provider default.
    pub model: String,
}

impl RepairConfig {
    pub fn new(target_version: impl Into<String>) -> Self {
        RepairConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            granularity: Granularity::FineGrained,
            ablation_no_slicing: false,
            ablation_no_retrieval: false,
            k_knowledge: 1,
            target_version: target_version.into(),
            source_version: None,
            all_errors: false,
            prompt_budget: DEFAULT_BUDGET,
            model: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 {
            return Err("max_iterations must be at least 1".into());
        }
        if !(1..=3).contains(&self.k_knowledge) {
            return Err("k_knowledge must be between 1 and 3".into());
        }
        Ok(())
    }

    /// Granularity actually used; no-retrieval demotes fine to coarse.
    pub fn effective_granularity(&self) -> Granularity {
        if self.ablation_no_retrieval && self.granularity == Granularity::FineGrained {
            Granularity::CoarseGrained
        } else {
            self.granularity
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RepairStatus {
    /// Iteration 0 means the input already compiled.
    Fixed {
        iteration: u32,
    },
    ExhaustedIterations,
    AbortedEnvironment {
        reason: String,
    },
}

impl RepairStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, RepairStatus::Fixed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PatchOutcome {
    Applied { edits: usize, whitespace_fallback: bool },
    ParseError { error: PatchError },
    ApplyError { error: PatchError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSummary {
    pub whole_file: bool,
    pub lines: Vec<u32>,
    pub keywords: Vec<String>,
}

impl SliceSummary {
    fn of(s: &CodeSlice) -> Self {
        SliceSummary {
            whole_file: s.whole_file,
            lines: s.lines().into_iter().collect(),
            keywords: s.error_keywords.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileSummary {
    pub success: bool,
    pub errors: usize,
    pub first_error: Option<String>,
}

impl CompileSummary {
    fn of(r: &CompileResult) -> Self {
        CompileSummary {
            success: is_clean(r),
            errors: r.errors().count(),
            first_error: r.first_error().map(|d| d.message.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub diagnostic: Diagnostic,
    pub granularity: Granularity,
    pub slice: SliceSummary,
    pub retrieved: Vec<RetrievalResult>,
    pub prompt_sha256: String,
    pub response_sha256: String,
    pub patch: PatchOutcome,
    pub compile_after: CompileSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(flatten)]
    pub status: RepairStatus,
    pub iterations: Vec<IterationRecord>,
    pub final_source: String,
}

/// Shared, read-only collaborators of a repair job.
#[derive(Clone, Copy)]
pub struct RepairDeps<'a> {
    pub compiler: &'a dyn Compiler,
    pub retriever: Option<&'a Retriever<'a>>,
    pub embeddings: Option<&'a dyn EmbeddingBackend>,
    pub template: &'a Template,
}

/// Compiled without errors of any category the repair can act on.
fn is_clean(r: &CompileResult) -> bool {
    r.success && !r.diagnostics.iter().any(|d| d.category.is_cli())
}

fn write_artifact(workdir: &Path, name: &str, contents: &str) {
    if let Err(e) = fs::write(workdir.join(name), contents) {
        log::warn!("cannot write {}: {e}", workdir.join(name).display());
    }
}

struct Job<'a> {
    cfg: &'a RepairConfig,
    deps: RepairDeps<'a>,
    workdir: &'a Path,
    iterations: Vec<IterationRecord>,
}

impl Job<'_> {
    fn compile(&self, source: &str, index: u32) -> Result<CompileResult, CompileError> {
        let r = self
            .deps
            .compiler
            .compile_file(CONTRACT_FILE, source, &self.cfg.target_version, self.workdir)?;
        write_artifact(self.workdir, &format!("iter{index}.compile.log"), &r.raw_output);
        Ok(r)
    }

    fn slice_for(&self, source: &str, result: &CompileResult, diag: &Diagnostic) -> CodeSlice {
        if self.cfg.ablation_no_slicing {
            return slicer::whole_file(source, Some(diag));
        }
        if !self.cfg.all_errors {
            return slicer::slice_source(source, diag);
        }
        let slices: Vec<CodeSlice> = result.errors().map(|d| slicer::slice_source(source, d)).collect();
        slicer::union(source, &slices)
    }

    fn knowledge_for(&self, diag: &Diagnostic) -> Result<(Vec<RetrievalResult>, Vec<KnowledgeEntry>), String> {
        let retriever = self
            .deps
            .retriever
            .ok_or("fine-grained prompting needs a knowledge store")?;
        let mut query = clean_query(diag);
        if let Some(src) = &self.cfg.source_version {
            query = query.with_versions(src, &self.cfg.target_version);
        }
        let hits = retrieve_with_fallback(retriever, &query, self.cfg.k_knowledge, self.deps.embeddings)
            .map_err(|e| e.to_string())?;
        let entries = hits
            .iter()
            .filter_map(|h| retriever.store().get(&h.entry_id).cloned())
            .collect();
        Ok((hits, entries))
    }

    fn aborted(self, reason: String, source: String) -> RepairReport {
        log::error!("repair aborted: {reason}");
        RepairReport {
            id: None,
            status: RepairStatus::AbortedEnvironment { reason },
            iterations: self.iterations,
            final_source: source,
        }
    }

    fn run(mut self, source: &str, provider: &dyn LlmProvider) -> RepairReport {
        let mut current = source.to_string();
        let mut last = match self.compile(&current, 0) {
            Ok(r) => r,
            Err(e) => return self.aborted(e.to_string(), current),
        };
        if is_clean(&last) {
            return RepairReport {
                id: None,
                status: RepairStatus::Fixed { iteration: 0 },
                iterations: Vec::new(),
                final_source: current,
            };
        }
        let granularity = self.cfg.effective_granularity();
        let mut feedback: Option<String> = None;

        for index in 1..=self.cfg.max_iterations {
            let Some(diag) = last.first_error().cloned() else {
                return self.aborted("compiler failed without a diagnostic".into(), current);
            };
            let slice = self.slice_for(&current, &last, &diag);

            let (retrieved, knowledge) = if granularity == Granularity::FineGrained {
                match self.knowledge_for(&diag) {
                    Ok(k) => k,
                    Err(e) => return self.aborted(e, current),
                }
            } else {
                (Vec::new(), Vec::new())
            };

            let error_diag = if self.cfg.all_errors && last.errors().count() > 1 {
                let joined = last.errors().map(|d| d.message.clone()).collect::<Vec<_>>().join("\n");
                Diagnostic {
                    message: joined,
                    ..diag.clone()
                }
            } else {
                diag.clone()
            };
            let prompt = build_prompt(
                granularity,
                &slice,
                Some(&error_diag),
                Some(&knowledge),
                (self.cfg.source_version.as_deref(), &self.cfg.target_version),
                self.deps.template,
            )
            .and_then(|p| {
                p.with_feedback(feedback.take())
                    .truncate_to_budget(self.cfg.prompt_budget)
            });
            let prompt = match prompt {
                Ok(p) => p,
                Err(e) => return self.aborted(format!("cannot build prompt: {e}"), current),
            };
            write_artifact(self.workdir, &format!("iter{index}.prompt.txt"), &prompt.rendered);

            let mut request = LlmRequest::new(prompt.rendered.clone(), self.cfg.model.clone());
            request.temperature = 0.0;
            let response = match provider.complete(&request) {
                Ok(r) => r,
                Err(e) => return self.aborted(e.to_string(), current),
            };
            write_artifact(self.workdir, &format!("iter{index}.response.txt"), &response.text);

            let outcome = match patch::parse_patch(&response.text) {
                Err(error) => PatchOutcome::ParseError { error },
                Ok(set) => match patch::apply(&set, &current) {
                    Ok(next) => {
                        current = next;
                        PatchOutcome::Applied {
                            edits: set.edits.len(),
                            whitespace_fallback: false,
                        }
                    }
                    Err(error @ PatchError::SearchNotFound { .. }) => {
                        match patch::apply_fallback_whitespace(&set, &current) {
                            Ok(next) => {
                                current = next;
                                PatchOutcome::Applied {
                                    edits: set.edits.len(),
                                    whitespace_fallback: true,
                                }
                            }
                            Err(_) => PatchOutcome::ApplyError { error },
                        }
                    }
                    Err(error) => PatchOutcome::ApplyError { error },
                },
            };

            if let PatchOutcome::Applied { .. } = outcome {
                write_artifact(self.workdir, &format!("iter{index}.sol"), &current);
                last = match self.compile(&current, index) {
                    Ok(r) => r,
                    Err(e) => return self.aborted(e.to_string(), current),
                };
            } else if let PatchOutcome::ParseError { error } | PatchOutcome::ApplyError { error } = &outcome {
                feedback = Some(error.to_string());
            }

            let fixed = is_clean(&last);
            self.iterations.push(IterationRecord {
                index,
                diagnostic: diag,
                granularity,
                slice: SliceSummary::of(&slice),
                retrieved,
                prompt_sha256: sha256_hex(prompt.rendered.as_bytes()),
                response_sha256: sha256_hex(response.text.as_bytes()),
                patch: outcome,
                compile_after: CompileSummary::of(&last),
            });
            if fixed {
                return RepairReport {
                    id: None,
                    status: RepairStatus::Fixed { iteration: index },
                    iterations: self.iterations,
                    final_source: current,
                };
            }
        }
        RepairReport {
            id: None,
            status: RepairStatus::ExhaustedIterations,
            iterations: self.iterations,
            final_source: current,
        }
    }
}

/// Repairs one contract. Artifacts (`iter<N>.prompt.txt`,
/// `iter<N>.response.txt`, `iter<N>.sol`, `iter<N>.compile.log`) are written
/// to `workdir`, which is created if needed.
pub fn repair(
    source: &str,
    cfg: &RepairConfig,
    deps: RepairDeps<'_>,
    provider: &dyn LlmProvider,
    workdir: &Path,
) -> RepairReport {
    let job = Job {
        cfg,
        deps,
        workdir,
        iterations: Vec::new(),
    };
    if let Err(e) = cfg.validate() {
        return job.aborted(e, source.to_string());
    }
    if let Err(e) = fs::create_dir_all(workdir) {
        return job.aborted(
            format!("cannot create workdir {}: {e}", workdir.display()),
            source.to_string(),
        );
    }
    job.run(source, provider)
}

/// One unit of batch work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchJob {
    pub id: String,
    pub source: String,
    pub target_version: String,
    pub source_version: Option<String>,
}

impl From<&crate::dataset::DatasetInstance> for BatchJob {
    fn from(d: &crate::dataset::DatasetInstance) -> Self {
        BatchJob {
            id: d.id.clone(),
            source: d.error_contract.clone(),
            target_version: d.target_version.clone(),
            source_version: Some(d.source_version.clone()),
        }
    }
}

/// Creates a fresh provider for each job.
pub type ProviderFactory<'a> = dyn Fn(&BatchJob) -> Result<Box<dyn LlmProvider>, LlmError> + Sync + 'a;

fn job_dir(root: &Path, index: usize, id: &str) -> PathBuf {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    root.join(format!("{index:04}-{safe}"))
}

/// Runs independent jobs on `parallelism` threads; reports come back in
/// input order. Job versions override those in `cfg`.
pub fn repair_batch(
    jobs: &[BatchJob],
    cfg: &RepairConfig,
    deps: RepairDeps<'_>,
    providers: &ProviderFactory<'_>,
    parallelism: usize,
    workdir_root: &Path,
) -> Vec<RepairReport> {
    let run = |(i, job): (usize, &BatchJob)| {
        let mut job_cfg = cfg.clone();
        job_cfg.target_version = job.target_version.clone();
        job_cfg.source_version = job.source_version.clone().or_else(|| cfg.source_version.clone());
        let dir = job_dir(workdir_root, i, &job.id);
        let mut report = match providers(job) {
            Ok(p) => repair(&job.source, &job_cfg, deps, p.as_ref(), &dir),
            Err(e) => RepairReport {
                id: None,
                status: RepairStatus::AbortedEnvironment { reason: e.to_string() },
                iterations: Vec::new(),
                final_source: job.source.clone(),
            },
        };
        report.id = Some(job.id.clone());
        report
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallelism.max(1)).build();
    match pool {
        Ok(pool) => pool.install(|| jobs.par_iter().enumerate().map(run).collect()),
        Err(e) => {
            log::warn!("cannot build thread pool ({e}); running sequentially");
            jobs.iter().enumerate().map(run).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub max_iterations: u32,
    pub pass_rate: f64,
    pub fixed: usize,
    pub total: usize,
}

/// Re-runs the batch for each iteration cap in `caps`.
pub fn sweep_iterations(
    jobs: &[BatchJob],
    cfg: &RepairConfig,
    deps: RepairDeps<'_>,
    providers: &ProviderFactory<'_>,
    caps: std::ops::RangeInclusive<u32>,
    parallelism: usize,
    workdir_root: &Path,
) -> Result<Vec<SweepRow>, String> {
    if jobs.is_empty() {
        return Err("empty dataset".into());
    }
    if *caps.start() == 0 || caps.is_empty() {
        return Err("iteration caps must be a non-empty range starting at 1 or more".into());
    }
    let mut rows = Vec::new();
    for cap in caps {
        let mut c = cfg.clone();
        c.max_iterations = cap;
        let reports = repair_batch(
            jobs,
            &c,
            deps,
            providers,
            parallelism,
            &workdir_root.join(format!("cap{cap:02}")),
        );
        let fixed = reports.iter().filter(|r| r.status.is_success()).count();
        rows.push(SweepRow {
            max_iterations: cap,
            pass_rate: 100.0 * fixed as f64 / reports.len() as f64,
            fixed,
            total: reports.len(),
        });
    }
    Ok(rows)
}
