use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use solfix::compiler::{self, CachedCompiler, Compiler, CompilerTable, SolcGateway};
use solfix::dataset::{self, DatasetInstance};
use solfix::knowledge::{self, KnowledgeStore, Labels};
use solfix::llm::{
    HttpChatProvider, HttpEmbeddings, HttpSettings, LlmError, LlmProvider, LlmRequest, LlmResponse, MockProvider,
};
use solfix::metrics;
use solfix::patch;
use solfix::prompt::{Granularity, Template};
use solfix::repair::{self, BatchJob, RepairConfig, RepairDeps, RepairReport, RepairStatus};
use solfix::retriever::{self, EmbeddingBackend, Retriever, ScoringParams};
use solfix::slicer;

use crate::config::{self, FileConfig};
use crate::exit::{self, usage};
use crate::{Cli, Cmd, KbCmd, PatchCmd, ProviderArgs, RepairArgs};

/// Flags merged over the config file.
struct Ctx<'a> {
    cli: &'a Cli,
    file: FileConfig,
}

pub fn run(cli: &Cli) -> Result<u8> {
    let (file, origin) = FileConfig::discover(cli.config.as_deref())
        .map_err(|e| e.context(exit::UsageError("bad configuration".into())))?;
    if let Some(p) = origin {
        log::info!("using config {}", p.display());
    }
    let ctx = Ctx { cli, file };
    match &cli.cmd {
        Cmd::Kb { cmd } => ctx.kb(cmd),
        Cmd::Slice(a) => ctx.slice(a),
        Cmd::Patch { cmd } => ctx.patch(cmd),
        Cmd::Fix(a) => ctx.fix(a),
        Cmd::Batch(a) => ctx.batch(a),
        Cmd::Eval(a) => ctx.eval(a),
        Cmd::Sweep(a) => ctx.sweep(a),
        Cmd::Version => ctx.version(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Shares one provider (and its in-flight cap) across batch jobs.
struct Shared(Arc<dyn LlmProvider>);

impl LlmProvider for Shared {
    fn name(&self) -> &str {
        self.0.name()
    }
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        self.0.complete(req)
    }
}

impl Ctx<'_> {
    fn compiler_table(&self) -> Result<CompilerTable> {
        let path = self
            .cli
            .compilers
            .clone()
            .or_else(|| self.file.compilers.clone())
            .or_else(config::default_compilers);
        match path {
            Some(p) => Ok(CompilerTable::load(&p)?),
            None => Ok(CompilerTable::new()),
        }
    }

    fn workdir_root(&self) -> PathBuf {
        self.cli
            .workdir
            .clone()
            .or_else(|| self.file.workdir.clone())
            .unwrap_or_else(config::default_workdir)
    }

    /// Fresh, timestamped job directory under the workdir root.
    fn job_dir(&self, label: &str) -> PathBuf {
        let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f");
        self.workdir_root()
            .join(format!("{stamp}-{}-{label}", std::process::id()))
    }

    fn template(&self, a: &RepairArgs) -> Result<Template> {
        match a.template.clone().or_else(|| self.file.template.clone()) {
            Some(p) => Ok(Template::load(&p)?),
            None => Ok(Template::default()),
        }
    }

    fn scoring(&self, weight_code: Option<f64>) -> ScoringParams {
        let mut p = ScoringParams::default();
        if let Some(w) = weight_code.or(self.file.repair.weight_code) {
            p.weight_code = w;
        }
        p
    }

    fn http_settings(&self, p: &ProviderArgs, model: Option<String>) -> Option<HttpSettings> {
        let llm = &self.file.llm;
        Some(HttpSettings {
            base_url: p.base_url.clone().or_else(|| llm.base_url.clone())?,
            model: model?,
            api_key: p.api_key.clone().or_else(|| llm.api_key.clone()),
            timeout: Duration::from_secs(llm.timeout_secs.unwrap_or(120)),
            max_in_flight: llm.max_in_flight.unwrap_or(solfix::llm::DEFAULT_MAX_IN_FLIGHT),
        })
    }

    fn chat_provider(&self, p: &ProviderArgs) -> Result<HttpChatProvider> {
        let model = p.model.clone().or_else(|| self.file.llm.model.clone());
        let settings = self.http_settings(p, model).ok_or_else(|| {
            LlmError::ProviderUnavailable(
                "no model configured: pass --mock, or set SOLFIX_LLM_BASE_URL and SOLFIX_LLM_MODEL".into(),
            )
        })?;
        Ok(HttpChatProvider::new(settings)?)
    }

    fn embeddings(&self, p: &ProviderArgs) -> Result<Option<HttpEmbeddings>> {
        let model = p
            .embedding_model
            .clone()
            .or_else(|| self.file.llm.embedding_model.clone());
        if model.is_none() {
            return Ok(None);
        }
        let settings = self
            .http_settings(p, model)
            .ok_or_else(|| usage("--embedding-model needs --base-url"))?;
        Ok(Some(HttpEmbeddings::new(settings)?))
    }

    fn repair_config(&self, a: &RepairArgs, max_iterations: Option<u32>, target: &str) -> Result<RepairConfig> {
        let r = &self.file.repair;
        let mut cfg = RepairConfig::new(target);
        cfg.max_iterations = max_iterations.or(r.max_iterations).unwrap_or(cfg.max_iterations);
        cfg.granularity = match (a.granularity, &r.granularity) {
            (Some(g), _) => g,
            (None, Some(s)) => s.parse().map_err(|e: String| usage(e))?,
            (None, None) => cfg.granularity,
        };
        cfg.ablation_no_slicing = a.no_slicing;
        cfg.ablation_no_retrieval = a.no_retrieval;
        cfg.k_knowledge = a.k_knowledge.or(r.k_knowledge).unwrap_or(cfg.k_knowledge);
        cfg.all_errors = a.all_errors;
        cfg.prompt_budget = a.prompt_budget.or(r.prompt_budget).unwrap_or(cfg.prompt_budget);
        cfg.model = a
            .provider
            .model
            .clone()
            .or_else(|| self.file.llm.model.clone())
            .unwrap_or_default();
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }

    /// The knowledge store, when the configured granularity needs one.
    fn store_for(&self, a: &RepairArgs, cfg: &RepairConfig) -> Result<Option<KnowledgeStore>> {
        if cfg.effective_granularity() != Granularity::FineGrained {
            return Ok(None);
        }
        let path =
            a.kb.clone()
                .or_else(|| self.file.kb.clone())
                .ok_or_else(|| usage("fine-grained prompts need a knowledge base (--kb), or pass --no-retrieval"))?;
        let store = KnowledgeStore::load(&path)?;
        if store.is_empty() {
            bail!(retriever::RetrieveError::EmptyStore);
        }
        Ok(Some(store))
    }

    fn kb(&self, cmd: &KbCmd) -> Result<u8> {
        match cmd {
            KbCmd::Build { html, labels, out } => {
                let (entries, digests) = knowledge::ingest_dir(html)?;
                let ingested = entries.len();
                let labels = Labels::load(labels)?;
                let mut store = knowledge::curate(entries, &labels)?;
                store.provenance.sources = digests;
                store.save(out)?;
                if self.cli.json {
                    print_json(&store.stats())?;
                } else {
                    println!(
                        "ingested {ingested} entries, kept {}, dropped {} -> {}",
                        store.len(),
                        store.provenance.dropped,
                        out.display()
                    );
                }
            }
            KbCmd::LabelTemplate { html, out } => {
                let (entries, _) = knowledge::ingest_dir(html)?;
                let text = knowledge::label_template(&entries) + "\n";
                match out {
                    Some(p) => write(p, &text)?,
                    None => print!("{text}"),
                }
            }
            KbCmd::Stats { kb } => {
                let stats = KnowledgeStore::load(kb)?.stats();
                if self.cli.json {
                    print_json(&stats)?;
                } else {
                    println!("entries:          {}", stats.entries);
                    println!("dropped (benign): {}", stats.dropped);
                    println!("with code spans:  {}", stats.with_code_spans);
                    for (pair, n) in &stats.by_version_pair {
                        println!("  {pair:<12} {n}");
                    }
                    for (cat, n) in &stats.by_category {
                        println!("  {cat:<12} {n}");
                    }
                }
            }
            KbCmd::Query {
                kb,
                error_file,
                k,
                weight_code,
                source_version,
                target_version,
                provider,
            } => {
                let store = KnowledgeStore::load(kb)?;
                let mut query = retriever::query_from_error_text(&read(error_file)?);
                match (source_version, target_version) {
                    (Some(s), Some(t)) => query = query.with_versions(s, t),
                    (None, None) => {}
                    _ => return Err(usage("--source-version and --target-version go together")),
                }
                let r = Retriever::new(&store, self.scoring(*weight_code))?;
                let backend = self.embeddings(provider)?;
                let hits = retriever::retrieve_with_fallback(
                    &r,
                    &query,
                    *k,
                    backend.as_ref().map(|b| b as &dyn EmbeddingBackend),
                )?;
                if self.cli.json {
                    let rows: Vec<_> = hits
                        .iter()
                        .map(|h| {
                            serde_json::json!({
                                "rank": h.rank,
                                "entry_id": h.entry_id,
                                "score": h.score,
                                "text": store.get(&h.entry_id).map(|e| e.text.as_str()),
                            })
                        })
                        .collect();
                    print_json(&rows)?;
                } else {
                    for h in &hits {
                        let e = store.get(&h.entry_id).expect("retrieved ids exist");
                        println!(
                            "{:>2}. {} {:.4}  [{}->{}] {}",
                            h.rank,
                            h.entry_id,
                            h.score,
                            e.source_version,
                            e.target_version,
                            e.render_marked()
                        );
                    }
                }
            }
            KbCmd::Acc {
                kb,
                eval_set,
                k,
                weight_code,
            } => {
                let store = KnowledgeStore::load(kb)?;
                let set = retriever::parse_eval_set(&read(eval_set)?).map_err(|e| {
                    anyhow!(knowledge::KbError::InvalidEntry {
                        id: eval_set.display().to_string(),
                        reason: e
                    })
                })?;
                let r = Retriever::new(&store, self.scoring(*weight_code))?;
                let mut rows = Vec::new();
                for &kk in k {
                    rows.push((kk, r.acc_at_k(&set, kk)?));
                }
                if self.cli.json {
                    let v: Vec<_> = rows
                        .iter()
                        .map(|(k, a)| serde_json::json!({"k": k, "acc": a}))
                        .collect();
                    print_json(&serde_json::json!({"queries": set.len(), "results": v}))?;
                } else {
                    println!("{} queries", set.len());
                    for (k, a) in rows {
                        println!("Acc@{k:<3} {a:6.2}%");
                    }
                }
            }
        }
        Ok(exit::OK)
    }

    fn slice(&self, a: &crate::SliceArgs) -> Result<u8> {
        let source = read(&a.file)?;
        let slice = if let Some(ef) = &a.error_file {
            let raw = read(ef)?;
            let diags = compiler::parse_diagnostics(&raw);
            let d = diags
                .iter()
                .find(|d| d.category.is_compilation())
                .or(diags.first())
                .ok_or_else(|| usage(format!("{} contains no diagnostic", ef.display())))?;
            slicer::slice_source(&source, d)
        } else {
            if a.line.is_none() && a.keyword.is_empty() {
                return Err(usage("give --error-file, or --line and/or --keyword"));
            }
            match slicer::parse_structure(&source) {
                Ok(root) => slicer::slice_with_keywords(&root, &source, a.line, a.column, &a.keyword),
                Err(e) => {
                    log::warn!("{e}; using the whole file");
                    slicer::whole_file(&source, None)
                }
            }
        };
        if self.cli.json {
            print_json(&slice)?;
            return Ok(exit::OK);
        }
        let total = source.lines().count();
        println!(
            "{} of {} lines{}; keywords: {}",
            slice.line_count(),
            total,
            if slice.whole_file { " (whole file)" } else { "" },
            if slice.error_keywords.is_empty() {
                "-".into()
            } else {
                slice.error_keywords.join(", ")
            }
        );
        for s in &slice.snippets {
            println!(
                "--- lines {}-{} (cols {}..{}, bytes {}..{})",
                s.span.start_line, s.span.end_line, s.span.start_col, s.span.end_col, s.range.start, s.range.end
            );
            for (i, line) in s.text.lines().enumerate() {
                let n = s.span.start_line as usize + i;
                let mark = if slice.error_line == Some(n as u32) { '>' } else { ' ' };
                println!("{mark}{n:>5} | {line}");
            }
        }
        Ok(exit::OK)
    }

    fn patch(&self, cmd: &PatchCmd) -> Result<u8> {
        let PatchCmd::Apply {
            source,
            patch: patch_file,
            in_place,
            out,
            lenient,
        } = cmd;
        let text = read(source)?;
        let set = patch::parse_patch(&read(patch_file)?)?;
        let (result, fallback) = match patch::apply(&set, &text) {
            Ok(r) => (r, false),
            Err(patch::PatchError::SearchNotFound { .. }) if *lenient => {
                (patch::apply_fallback_whitespace(&set, &text)?, true)
            }
            Err(e) => return Err(e.into()),
        };
        let dest = if *in_place { Some(source.clone()) } else { out.clone() };
        match &dest {
            Some(p) => write(p, &result)?,
            None if !self.cli.json => print!("{result}"),
            None => {}
        }
        if self.cli.json {
            print_json(&serde_json::json!({
                "edits": set.edits.len(),
                "whitespace_fallback": fallback,
                "written_to": dest,
                "result": if dest.is_none() { Some(&result) } else { None },
            }))?;
        } else if let Some(p) = dest {
            eprintln!("applied {} edit(s) to {}", set.edits.len(), p.display());
        }
        Ok(exit::OK)
    }

    fn fix(&self, a: &crate::FixArgs) -> Result<u8> {
        let source = read(&a.file)?;
        let mut cfg = self.repair_config(&a.repair, a.max_iterations, &a.target)?;
        cfg.source_version = a.source_version.clone();
        let gateway = SolcGateway::new(self.compiler_table()?);
        gateway.check_available(&a.target)?;
        let store = self.store_for(&a.repair, &cfg)?;
        let retriever = store
            .as_ref()
            .map(|s| Retriever::new(s, self.scoring(a.repair.weight_code)))
            .transpose()?;
        let template = self.template(&a.repair)?;
        let embeddings = self.embeddings(&a.repair.provider)?;
        let provider: Box<dyn LlmProvider> = match &a.mock {
            Some(p) => Box::new(MockProvider::load(p)?),
            None => Box::new(self.chat_provider(&a.repair.provider)?),
        };
        let deps = RepairDeps {
            compiler: &gateway,
            retriever: retriever.as_ref(),
            embeddings: embeddings.as_ref().map(|b| b as &dyn EmbeddingBackend),
            template: &template,
        };
        let stem = a
            .file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "contract".into());
        let workdir = self.job_dir(&stem);
        let mut report = repair::repair(&source, &cfg, deps, provider.as_ref(), &workdir);
        report.id = Some(stem);

        if let Some(p) = &a.report {
            write(p, &(serde_json::to_string_pretty(&report)? + "\n"))?;
        }
        let dest = if a.in_place {
            Some(a.file.clone())
        } else {
            a.out.clone()
        };
        if let Some(p) = &dest {
            if report.final_source != source || !a.in_place {
                write(p, &report.final_source)?;
            }
        }
        if self.cli.json {
            print_json(&report)?;
        } else {
            print!("{}", describe(&report));
            if let Some(p) = &dest {
                println!("final source: {}", p.display());
            }
        }
        finish_workdir(&workdir, a.repair.keep_artifacts);
        Ok(match report.status {
            RepairStatus::Fixed { .. } => exit::OK,
            RepairStatus::ExhaustedIterations => exit::NOT_FIXED,
            RepairStatus::AbortedEnvironment { .. } => exit::ENVIRONMENT,
        })
    }

    /// Per-job provider factory: one transcript per instance id, or a
    /// shared HTTP client.
    fn factory(&self, mock_dir: Option<&Path>, p: &ProviderArgs) -> Result<Box<repair::ProviderFactory<'static>>> {
        match mock_dir {
            Some(dir) => {
                if !dir.is_dir() {
                    bail!(LlmError::BadTranscript {
                        path: dir.display().to_string(),
                        reason: "not a directory".into()
                    });
                }
                let dir = dir.to_path_buf();
                Ok(Box::new(move |job: &BatchJob| {
                    MockProvider::load(&dir.join(format!("{}.jsonl", job.id)))
                        .map(|m| Box::new(m) as Box<dyn LlmProvider>)
                }))
            }
            None => {
                let shared: Arc<dyn LlmProvider> = Arc::new(self.chat_provider(p)?);
                Ok(Box::new(move |_: &BatchJob| {
                    Ok(Box::new(Shared(shared.clone())) as Box<dyn LlmProvider>)
                }))
            }
        }
    }

    fn load_dataset(&self, path: &Path) -> Result<(Vec<DatasetInstance>, Vec<BatchJob>)> {
        let ds = dataset::load(path)?;
        if ds.is_empty() {
            bail!(metrics::MetricsError::EmptyInput);
        }
        let jobs = ds.iter().map(BatchJob::from).collect();
        Ok((ds, jobs))
    }

    fn parallelism(&self, flag: Option<usize>) -> Result<usize> {
        let n = flag.or(self.file.repair.parallelism).unwrap_or(1);
        if n == 0 {
            return Err(usage("--parallelism must be at least 1"));
        }
        Ok(n)
    }

    fn batch(&self, a: &crate::BatchArgs) -> Result<u8> {
        let (_, jobs) = self.load_dataset(&a.dataset)?;
        let cfg = self.repair_config(&a.repair, a.max_iterations, &jobs[0].target_version)?;
        let gateway = SolcGateway::new(self.compiler_table()?);
        let store = self.store_for(&a.repair, &cfg)?;
        let retriever = store
            .as_ref()
            .map(|s| Retriever::new(s, self.scoring(a.repair.weight_code)))
            .transpose()?;
        let template = self.template(&a.repair)?;
        let embeddings = self.embeddings(&a.repair.provider)?;
        let deps = RepairDeps {
            compiler: &gateway,
            retriever: retriever.as_ref(),
            embeddings: embeddings.as_ref().map(|b| b as &dyn EmbeddingBackend),
            template: &template,
        };
        let factory = self.factory(a.mock_dir.as_deref(), &a.repair.provider)?;
        let root = self.job_dir("batch");
        let reports = repair::repair_batch(
            &jobs,
            &cfg,
            deps,
            factory.as_ref(),
            self.parallelism(a.parallelism)?,
            &root,
        );
        if let Some(p) = &a.reports {
            write(p, &(serde_json::to_string_pretty(&reports)? + "\n"))?;
        }
        let rate = metrics::pass_rate(&reports)?;
        if self.cli.json {
            print_json(&serde_json::json!({"pass_rate": rate, "reports": reports}))?;
        } else {
            for r in &reports {
                println!("{:<24} {}", r.id.as_deref().unwrap_or("?"), status_text(&r.status));
            }
            println!("pass rate: {rate:.2}% ({} instances)", reports.len());
        }
        finish_workdir(&root, a.repair.keep_artifacts);
        Ok(exit::OK)
    }

    fn eval(&self, a: &crate::EvalArgs) -> Result<u8> {
        let ds = dataset::load(&a.dataset)?;
        let reports: Vec<RepairReport> = serde_json::from_str(&read(&a.reports)?)
            .with_context(|| format!("{} is not a JSON array of repair reports", a.reports.display()))?;
        for (i, (d, r)) in ds.iter().zip(&reports).enumerate() {
            if let Some(id) = &r.id {
                if id != &d.id {
                    bail!(dataset::DatasetError::Invalid {
                        path: a.reports.display().to_string(),
                        line: i + 1,
                        reason: format!("report `{id}` does not match dataset instance `{}`", d.id),
                    });
                }
            }
        }
        let summary = metrics::evaluate(&ds, &reports)?;
        if let Some(p) = &a.out {
            write(p, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
        }
        if self.cli.json {
            print_json(&summary)?;
        } else {
            print!("{}", summary.to_table());
        }
        Ok(exit::OK)
    }

    fn sweep(&self, a: &crate::SweepArgs) -> Result<u8> {
        let (_, jobs) = self.load_dataset(&a.dataset)?;
        let cfg = self.repair_config(&a.repair, Some(*a.max_iterations.start()), &jobs[0].target_version)?;
        let compiler = CachedCompiler::new(SolcGateway::new(self.compiler_table()?));
        let store = self.store_for(&a.repair, &cfg)?;
        let retriever = store
            .as_ref()
            .map(|s| Retriever::new(s, self.scoring(a.repair.weight_code)))
            .transpose()?;
        let template = self.template(&a.repair)?;
        let embeddings = self.embeddings(&a.repair.provider)?;
        let deps = RepairDeps {
            compiler: &compiler,
            retriever: retriever.as_ref(),
            embeddings: embeddings.as_ref().map(|b| b as &dyn EmbeddingBackend),
            template: &template,
        };
        let factory = self.factory(a.mock_dir.as_deref(), &a.repair.provider)?;
        let root = self.job_dir("sweep");
        let rows = repair::sweep_iterations(
            &jobs,
            &cfg,
            deps,
            factory.as_ref(),
            a.max_iterations.clone(),
            self.parallelism(a.parallelism)?,
            &root,
        )
        .map_err(usage)?;
        let mut csv = String::from("max_iterations,pass_rate\n");
        for r in &rows {
            let _ = writeln!(csv, "{},{:.4}", r.max_iterations, r.pass_rate);
        }
        write(&a.out, &csv)?;
        if self.cli.json {
            print_json(&rows)?;
        } else {
            println!("{:>14} {:>10}", "max iterations", "pass rate");
            for r in &rows {
                println!("{:>14} {:>9.2}%", r.max_iterations, r.pass_rate);
            }
            println!("data: {}", a.out.display());
        }
        finish_workdir(&root, a.repair.keep_artifacts);
        Ok(exit::OK)
    }

    fn version(&self) -> Result<u8> {
        let table = self.compiler_table()?;
        let compilers: Vec<(String, String)> = table
            .entries()
            .map(|(k, p)| (k.to_string(), p.display().to_string()))
            .collect();
        if self.cli.json {
            print_json(&serde_json::json!({
                "solfix": env!("CARGO_PKG_VERSION"),
                "compilers": compilers.iter().map(|(k, p)| serde_json::json!({"version": k, "path": p})).collect::<Vec<_>>(),
            }))?;
        } else {
            println!("solfix {}", env!("CARGO_PKG_VERSION"));
            if compilers.is_empty() {
                println!("no compilers configured");
            }
            for (k, p) in compilers {
                println!("  solc {k:<8} {p}");
            }
        }
        Ok(exit::OK)
    }
}

fn finish_workdir(dir: &Path, keep: bool) {
    if keep {
        eprintln!("artifacts kept in {}", dir.display());
    } else if dir.exists() {
        if let Err(e) = fs::remove_dir_all(dir) {
            log::warn!("cannot remove {}: {e}", dir.display());
        }
    }
}

fn status_text(s: &RepairStatus) -> String {
    match s {
        RepairStatus::Fixed { iteration: 0 } => "already compiles".into(),
        RepairStatus::Fixed { iteration } => format!("fixed at iteration {iteration}"),
        RepairStatus::ExhaustedIterations => "not fixed (iteration cap reached)".into(),
        RepairStatus::AbortedEnvironment { reason } => format!("aborted: {reason}"),
    }
}

fn describe(r: &RepairReport) -> String {
    let mut out = format!("{}\n", status_text(&r.status));
    for it in &r.iterations {
        let outcome = match &it.patch {
            repair::PatchOutcome::Applied {
                edits,
                whitespace_fallback,
            } => {
                format!(
                    "applied {edits} edit(s){}",
                    if *whitespace_fallback {
                        " (whitespace-insensitive)"
                    } else {
                        ""
                    }
                )
            }
            repair::PatchOutcome::ParseError { error } | repair::PatchOutcome::ApplyError { error } => {
                error.to_string()
            }
        };
        let after = if it.compile_after.success {
            "compiles".to_string()
        } else {
            format!("{} error(s)", it.compile_after.errors)
        };
        let _ = writeln!(out, "  #{} {} -> {outcome}; {after}", it.index, it.diagnostic.message);
    }
    out
}
