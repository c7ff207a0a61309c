//! One pass/fail line per acceptance criterion. Runs the real compilers
//! from `tools/compilers.toml` (or `SOLFIX_COMPILERS`) and the built binary.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use solfix::compiler::{classify, parse_diagnostics, Compiler, CompilerTable, ErrorCategory, SolcGateway};
use solfix::knowledge::{curate, ingest_dir, ingest_html, KnowledgeStore, Labels};
use solfix::metrics::{bleu4, edit_similarity, pass_rate};
use solfix::patch::{apply, parse_patch, render_edits, Edit, PatchError};
use solfix::repair::{RepairReport, RepairStatus};
use solfix::retriever::{Query, Retriever, ScoringParams};
use solfix::slicer;

#[path = "../../core/tests/support/mod.rs"]
mod support;
use support::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn compilers() -> PathBuf {
    std::env::var_os("SOLFIX_COMPILERS")
        .map(PathBuf::from)
        .unwrap_or_else(|| repo("tools/compilers.toml"))
}

fn gateway() -> Result<SolcGateway, String> {
    CompilerTable::load(&compilers())
        .map(SolcGateway::new)
        .map_err(|e| e.to_string())
}

fn solfix(work: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_solfix"));
    for var in [
        "SOLFIX_CONFIG",
        "SOLFIX_KB",
        "SOLFIX_LLM_BASE_URL",
        "SOLFIX_LLM_MODEL",
        "SOLFIX_LLM_API_KEY",
        "SOLFIX_EMBEDDING_MODEL",
    ] {
        cmd.env_remove(var);
    }
    cmd.current_dir(work)
        .env("SOLFIX_COMPILERS", compilers())
        .env("SOLFIX_WORKDIR", work.join("jobs"))
        .args(args)
        .output()
        .expect("spawn solfix")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("{what} took {took:.1?}, limit {limit:?}"))
}

/// Runs `fix` on the guess-game fixture and checks the outcome.
fn guess_game_fix(extra: &[&str]) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("fixed.sol");
    let contract = repo("fixtures/contracts/guess_game.sol");
    let kb = repo("fixtures/kb/kb.jsonl");
    let mock = repo("fixtures/contracts/guess_game.mock.jsonl");
    let mut args = vec![
        "--json",
        "fix",
        contract.to_str().unwrap(),
        "--target",
        "0.8",
        "--source-version",
        "0.5",
        "--kb",
        kb.to_str().unwrap(),
        "--mock",
        mock.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let start = Instant::now();
    let o = solfix(dir.path(), &args);
    let took = start.elapsed();
    ensure(o.status.code() == Some(0), || {
        format!("exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr))
    })?;
    let report: RepairReport = serde_json::from_slice(&o.stdout).map_err(|e| e.to_string())?;
    ensure(report.status == RepairStatus::Fixed { iteration: 2 }, || {
        format!("status {:?}", report.status)
    })?;
    let fixed = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
    let check = gateway()?
        .compile(&fixed, "0.8", dir.path())
        .map_err(|e| e.to_string())?;
    ensure(check.success, || {
        format!("final file does not compile:\n{}", check.raw_output)
    })?;
    ensure(took < Duration::from_secs(30), || format!("took {took:.1?}"))?;
    Ok(format!(
        "fixed at iteration 2 in {took:.1?}, output compiles under {}",
        check.compiler_version
    ))
}

fn c1_end_to_end() -> Outcome {
    guess_game_fix(&[])
}

fn c2_patch_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(0x5eed_0002);
    let mut pairs = 0;
    while pairs < 100 {
        let old = random_lines(&mut rng, 14);
        let new = random_lines(&mut rng, 14);
        if !old.iter().any(|l| !l.is_empty()) || old == new {
            continue;
        }
        pairs += 1;
        let edits = diff_to_edits(&old, &new);
        let set = parse_patch(&render_edits(&edits)).map_err(|e| format!("pair {pairs}: {e}"))?;
        let got = apply(&set, &join_lines(&old)).map_err(|e| format!("pair {pairs}: {e}"))?;
        ensure(got == join_lines(&new), || format!("pair {pairs}: output differs"))?;
    }
    let mut counts = [0usize; 3];
    for i in 0..300 {
        let source = random_lines(&mut rng, 12);
        let probe: Vec<String> = (0..1 + rng.below(3)).map(|_| rng.pick(LINE_POOL).to_string()).collect();
        if probe.iter().all(|l| l.is_empty()) {
            continue;
        }
        let set =
            parse_patch(&render_edits(&[Edit::new(&probe, &["// patched".to_string()])])).map_err(|e| e.to_string())?;
        let n = occurrences(&source, &probe);
        let ok = match (n, apply(&set, &join_lines(&source))) {
            (0, Err(PatchError::SearchNotFound { .. })) => true,
            (1, Ok(_)) => true,
            (n, Err(PatchError::AmbiguousMatch { count, .. })) => n >= 2 && count == n,
            _ => false,
        };
        ensure(ok, || format!("probe {i}: counter says {n}"))?;
        counts[n.min(2)] += 1;
    }
    within(start, Duration::from_secs(5), "round trip")?;
    Ok(format!(
        "100 pairs reproduced; errors agree with counter (0:{} 1:{} ≥2:{})",
        counts[0], counts[1], counts[2]
    ))
}

fn c3_code_weighting() -> Outcome {
    let start = Instant::now();
    let (store, truth) = code_weighting_store();
    let eval: Vec<(Query, String)> = code_weighting_queries()
        .into_iter()
        .map(|q| (q, truth.clone()))
        .collect();
    let acc = |wc: f64| -> Result<f64, String> {
        let params = ScoringParams {
            weight_code: wc,
            version_boost: 1.0,
        };
        Retriever::new(&store, params)
            .and_then(|r| r.acc_at_k(&eval, 1))
            .map_err(|e| e.to_string())
    };
    let (plain, weighted) = (acc(1.0)?, acc(2.0)?);
    ensure(eval.len() >= 10, || "too few queries".into())?;
    ensure(weighted == 100.0 && plain < 100.0, || {
        format!("Acc@1 weight1={plain} weight2={weighted}")
    })?;

    let fixture = KnowledgeStore::load(&repo("fixtures/kb/kb.jsonl")).map_err(|e| e.to_string())?;
    let mut rng = Rng::new(0x5eed_0003);
    let words = [
        "address",
        "payable",
        "transfer",
        "now",
        "byte",
        "var",
        "throw",
        "msg.sender",
        "type",
        "fallback",
    ];
    let mut checked = 0;
    for store in [&store, &fixture] {
        let r = Retriever::new(store, ScoringParams::default()).map_err(|e| e.to_string())?;
        for _ in 0..50 {
            let text: Vec<&str> = (0..1 + rng.below(5)).map(|_| *rng.pick(&words)).collect();
            let q = Query::new(text.join(" ")).with_code_tokens(&[*rng.pick(&words)]);
            for k in 1..=store.len() {
                let a = r.retrieve(&q, k).map_err(|e| e.to_string())?;
                let b = r.retrieve(&q, k + 1).map_err(|e| e.to_string())?;
                ensure(b.starts_with(&a), || {
                    format!("retrieve({k}) is not a prefix of retrieve({})", k + 1)
                })?;
                checked += 1;
            }
        }
    }
    within(start, Duration::from_secs(1), "retrieval checks")?;
    Ok(format!(
        "Acc@1 {plain:.1}% at weight 1, {weighted:.1}% at weight 2 over {} queries; {checked} prefix checks",
        eval.len()
    ))
}

fn report(status: RepairStatus) -> RepairReport {
    RepairReport {
        id: None,
        status,
        iterations: Vec::new(),
        final_source: String::new(),
    }
}

fn c4_metrics() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(0x5eed_0004);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let (c, r) = random_text_pair(&mut rng);
        let got = bleu4(&c, &r).map_err(|e| e.to_string())?;
        let diff = (got - oracle_bleu(&c, &r)).abs();
        ensure(diff < 1e-9, || format!("BLEU pair {i} off by {diff:e}"))?;
        worst = worst.max(diff);
    }
    let es = edit_similarity("abc", "abd");
    ensure(es == 2.0 / 3.0, || format!("ES(abc, abd) = {es:?}"))?;
    for i in 0..100 {
        let (a, b) = (random_code(&mut rng, 8), random_code(&mut rng, 8));
        let diff = (edit_similarity(&a, &b) - oracle_es(&a, &b)).abs();
        ensure(diff < 1e-12, || format!("ES pair {i} off by {diff:e}"))?;
    }
    let reports = [
        report(RepairStatus::Fixed { iteration: 1 }),
        report(RepairStatus::ExhaustedIterations),
        report(RepairStatus::Fixed { iteration: 3 }),
        report(RepairStatus::ExhaustedIterations),
    ];
    let pr = pass_rate(&reports).map_err(|e| e.to_string())?;
    ensure(pr == 50.0, || format!("pass rate {pr}"))?;
    within(start, Duration::from_secs(5), "metric checks")?;
    Ok(format!(
        "BLEU max deviation {worst:.1e}; ES exact and 100 DP pairs agree; pass rate 50.0"
    ))
}

fn c5_diagnostics() -> Outcome {
    let raw =
        std::fs::read_to_string(repo("fixtures/diagnostics/transfer_on_address.txt")).map_err(|e| e.to_string())?;
    let diags = parse_diagnostics(&raw);
    ensure(diags.len() == 1, || format!("{} diagnostics", diags.len()))?;
    let d = &diags[0];
    let loc = d.location.as_ref().ok_or("no location")?;
    ensure(
        d.category == ErrorCategory::Type && loc.file == "contracts/3.sol" && loc.line == 27 && loc.column == 9,
        || format!("{:?} {}:{}:{}", d.category, loc.file, loc.line, loc.column),
    )?;
    let cases = [
        ("ParserError: x", ErrorCategory::Parser),
        (
            "DeclarationError: Identifier already declared.",
            ErrorCategory::Declaration,
        ),
        ("SyntaxError: x", ErrorCategory::Syntax),
        ("TypeError: x", ErrorCategory::Type),
        ("JSONError: x", ErrorCategory::JsonError),
        (
            "Error: Source \"a.sol\" not found: File not found.",
            ErrorCategory::IoError,
        ),
        ("SomethingNovel: xyz", ErrorCategory::Other),
        ("no prefix", ErrorCategory::Other),
    ];
    for (m, want) in cases {
        ensure(classify(m) == want, || format!("classify({m:?}) = {:?}", classify(m)))?;
    }
    Ok("Type at contracts/3.sol:27:9; all prefixes classified, Other as fallback".into())
}

/// Body line ranges of every function in `source` except the one holding `line`.
fn other_function_bodies(source: &str, line: u32) -> Vec<(u32, u32)> {
    let lines: Vec<&str> = source.lines().collect();
    let mut out = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        if !l.starts_with("    function ") {
            continue;
        }
        let start = i as u32 + 2;
        let end = (i + 1..lines.len())
            .find(|&j| lines[j] == "    }")
            .map(|j| j as u32)
            .unwrap_or(start);
        if !(start - 1..=end + 1).contains(&line) && end >= start {
            out.push((start, end));
        }
    }
    out
}

fn c6_slicer() -> Outcome {
    let source = std::fs::read_to_string(repo("fixtures/contracts/guess_game.sol")).map_err(|e| e.to_string())?;
    let total = source.lines().count();
    ensure(total >= 80, || format!("fixture has {total} lines"))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let result = gateway()?
        .compile(&source, "0.8", dir.path())
        .map_err(|e| e.to_string())?;
    let diag = result.first_error().ok_or("fixture compiles under 0.8")?;
    ensure(diag.line() == Some(71), || {
        format!("compiler flags line {:?}", diag.line())
    })?;
    let s = slicer::slice_source(&source, diag);
    ensure(s.contains_line(5) && s.contains_line(71), || {
        format!("slice lines {:?}", s.lines())
    })?;
    let bodies = other_function_bodies(&source, 71);
    for &(a, b) in &bodies {
        ensure((a..=b).all(|l| !s.contains_line(l)), || {
            format!("slice includes body lines {a}-{b}")
        })?;
    }
    ensure(s.line_count() * 4 <= total, || {
        format!("{} of {total} lines", s.line_count())
    })?;
    let e2e = guess_game_fix(&["--no-slicing"]).map_err(|e| format!("--no-slicing: {e}"))?;
    Ok(format!(
        "{} of {total} lines, lines 5 and 71 kept, {} other bodies excluded; --no-slicing {e2e}",
        s.line_count(),
        bodies.len()
    ))
}

fn c7_sweep() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("sweep.csv");
    let o = solfix(
        dir.path(),
        &[
            "sweep",
            "--dataset",
            repo("fixtures/dataset/dataset.jsonl").to_str().unwrap(),
            "--mock-dir",
            repo("fixtures/dataset/mock").to_str().unwrap(),
            "--kb",
            repo("fixtures/kb/kb.jsonl").to_str().unwrap(),
            "--max-iterations",
            "1..10",
            "--parallelism",
            "4",
            "--out",
            csv.to_str().unwrap(),
        ],
    );
    ensure(o.status.success(), || {
        format!("exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr))
    })?;
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let rates: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .nth(1)
                .and_then(|v| v.parse().ok())
                .ok_or(format!("bad row {l:?}"))
        })
        .collect::<Result<_, _>>()?;
    ensure(rates.len() == 10, || format!("{} rows", rates.len()))?;
    ensure(rates[0] < rates[1] && rates[1] < rates[2], || {
        format!("not increasing over 1..3: {rates:?}")
    })?;
    ensure(rates[2..].iter().all(|&r| r == rates[2]), || {
        format!("not flat over 3..10: {rates:?}")
    })?;
    Ok(format!(
        "pass rate {:.2} < {:.2} < {:.2}, flat to cap 10",
        rates[0], rates[1], rates[2]
    ))
}

fn c8_ingestion() -> Outcome {
    let html = std::fs::read_to_string(repo("fixtures/kb/html/0.5-0.6.html")).map_err(|e| e.to_string())?;
    let entries = ingest_html(&html, "0.5", "0.6").map_err(|e| e.to_string())?;
    let hits: Vec<_> = entries.iter().filter(|e| e.text.contains("payable(x)")).collect();
    ensure(hits.len() == 1, || format!("{} payable(x) entries", hits.len()))?;
    let spans: Vec<&str> = hits[0].code_texts().collect();
    ensure(spans == ["payable(x)"], || format!("code spans {spans:?}"))?;

    let build = |html: &str, labels: &str| -> Result<KnowledgeStore, String> {
        let (entries, digests) = ingest_dir(&repo(html)).map_err(|e| e.to_string())?;
        let labels = Labels::load(&repo(labels)).map_err(|e| e.to_string())?;
        let mut store = curate(entries, &labels).map_err(|e| e.to_string())?;
        store.provenance.sources = digests;
        Ok(store)
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for name in ["a.jsonl", "b.jsonl"] {
        let p = dir.path().join(name);
        build("fixtures/kb/html", "fixtures/kb/labels.json")?
            .save(&p)
            .map_err(|e| e.to_string())?;
        bytes.push(std::fs::read(&p).map_err(|e| e.to_string())?);
    }
    ensure(bytes[0] == bytes[1], || "re-ingestion differs".into())?;
    let (all, _) = ingest_dir(&repo("fixtures/kb131/html")).map_err(|e| e.to_string())?;
    let curated = build("fixtures/kb131/html", "fixtures/kb131/labels.json")?;
    ensure(all.len() == 131 && curated.len() == 93, || {
        format!("{} ingested, {} kept", all.len(), curated.len())
    })?;
    Ok("single span \"payable(x)\"; rebuild byte-identical; 131 ingested → 93 kept".into())
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut lists = Vec::new();
    for par in ["1", "4"] {
        let out = dir.path().join(format!("reports-{par}.json"));
        let o = solfix(
            dir.path(),
            &[
                "batch",
                "--dataset",
                repo("fixtures/dataset/dataset.jsonl").to_str().unwrap(),
                "--mock-dir",
                repo("fixtures/dataset/mock").to_str().unwrap(),
                "--kb",
                repo("fixtures/kb/kb.jsonl").to_str().unwrap(),
                "--parallelism",
                par,
                "--reports",
                out.to_str().unwrap(),
            ],
        );
        ensure(o.status.code().is_some_and(|c| c <= 1), || {
            format!(
                "parallelism {par}: exit {:?}: {}",
                o.status.code(),
                String::from_utf8_lossy(&o.stderr)
            )
        })?;
        lists.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    let reports: Vec<RepairReport> = serde_json::from_slice(&lists[0]).map_err(|e| e.to_string())?;
    ensure(reports.len() == 12, || format!("{} reports", reports.len()))?;
    ensure(lists[0] == lists[1], || {
        "report lists differ between parallelism 1 and 4".into()
    })?;
    let fixed = reports.iter().filter(|r| r.status.is_success()).count();
    Ok(format!("12 reports identical at parallelism 1 and 4 ({fixed} fixed)"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("end-to-end mock repair", c1_end_to_end),
        ("patch round trip", c2_patch_round_trip),
        ("retrieval code weighting", c3_code_weighting),
        ("metric oracles", c4_metrics),
        ("diagnostic parsing golden", c5_diagnostics),
        ("slicer fidelity", c6_slicer),
        ("iteration-cap sweep shape", c7_sweep),
        ("ingestion fidelity", c8_ingestion),
        ("batch determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("[PASS] {}. {name} ({took:.2?}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {}. {name} ({took:.2?}): {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
