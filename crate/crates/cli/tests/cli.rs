use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
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
        .env("SOLFIX_COMPILERS", repo("tools/compilers.toml"))
        .env("SOLFIX_WORKDIR", work.join("jobs"))
        .args(args)
        .output()
        .expect("spawn solfix")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn already_compiling_contract_needs_no_iterations() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("ok.sol"),
        "// SPDX-License-Identifier: MIT\npragma solidity ^0.8.0;\ncontract A {}\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let o = solfix(
        dir.path(),
        &[
            "--json",
            "fix",
            "ok.sol",
            "--target",
            "0.8",
            "--mock",
            "empty.jsonl",
            "--no-retrieval",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&o);
    assert_eq!(r["status"], "fixed");
    assert_eq!(r["iteration"], 0);
    assert_eq!(r["iterations"].as_array().unwrap().len(), 0);
    // Working directories are cleaned up by default.
    let left = std::fs::read_dir(dir.path().join("jobs"))
        .map(|d| d.count())
        .unwrap_or(0);
    assert_eq!(left, 0);
}

#[test]
fn guess_game_fixed_on_second_response() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fixed.sol");
    let o = solfix(
        dir.path(),
        &[
            "--json",
            "fix",
            repo("fixtures/contracts/guess_game.sol").to_str().unwrap(),
            "--target",
            "0.8",
            "--source-version",
            "0.5",
            "--kb",
            repo("fixtures/kb/kb.jsonl").to_str().unwrap(),
            "--mock",
            repo("fixtures/contracts/guess_game.mock.jsonl").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--keep-artifacts",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&o);
    assert_eq!(r["status"], "fixed");
    assert_eq!(r["iteration"], 2);
    let iters = r["iterations"].as_array().unwrap();
    assert_eq!(iters[0]["patch"]["outcome"], "parse_error");
    assert_eq!(iters[1]["retrieved"][0]["entry_id"], "430c5230d857");
    assert!(std::fs::read_to_string(&out)
        .unwrap()
        .contains("guessHistory.player = payable(msg.sender);"));
    let jobs: Vec<_> = std::fs::read_dir(dir.path().join("jobs")).unwrap().collect();
    assert_eq!(jobs.len(), 1);
    let job = jobs[0].as_ref().unwrap().path();
    for f in [
        "iter1.prompt.txt",
        "iter1.response.txt",
        "iter2.compile.log",
        "iter2.sol",
    ] {
        assert!(job.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn zero_iteration_cap_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.sol"), "pragma solidity ^0.8.0;\ncontract A {}\n").unwrap();
    let o = solfix(
        dir.path(),
        &[
            "fix",
            "a.sol",
            "--target",
            "0.8",
            "--max-iterations",
            "0",
            "--no-retrieval",
        ],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn unknown_compiler_is_an_environment_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.sol"), "contract A {}\n").unwrap();
    std::fs::write(dir.path().join("m.jsonl"), "").unwrap();
    let o = solfix(
        dir.path(),
        &[
            "fix",
            "a.sol",
            "--target",
            "9.9.9",
            "--mock",
            "m.jsonl",
            "--no-retrieval",
        ],
    );
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("9.9.9"));
}

#[test]
fn missing_knowledge_base_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("err.txt"), "TypeError: boom").unwrap();
    let o = solfix(dir.path(), &["kb", "query", "nope/kb.jsonl", "--error-file", "err.txt"]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("nope/kb.jsonl"), "{}", stderr(&o));
}

#[test]
fn kb_query_ranks_fixture_entries() {
    let dir = tempfile::tempdir().unwrap();
    let err = repo("fixtures/diagnostics/transfer_on_address.txt");
    let o = solfix(
        dir.path(),
        &[
            "--json",
            "kb",
            "query",
            repo("fixtures/kb/kb.jsonl").to_str().unwrap(),
            "--error-file",
            err.to_str().unwrap(),
            "-k",
            "3",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    let text = v.to_string();
    assert!(text.contains("4ada65ec69ae"), "{text}");
}

const SOURCE: &str = "contract A {\n    uint x;\n    uint x;\n    uint y;\n}\n";

fn apply_patch(patch: &str) -> (i32, String, String) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.sol"), SOURCE).unwrap();
    std::fs::write(dir.path().join("p.txt"), patch).unwrap();
    let o = solfix(
        dir.path(),
        &[
            "patch", "apply", "--source", "a.sol", "--patch", "p.txt", "--out", "b.sol",
        ],
    );
    let out = std::fs::read_to_string(dir.path().join("b.sol")).unwrap_or_default();
    (code(&o), out, stderr(&o))
}

#[test]
fn patch_apply_exit_codes() {
    let block = |s: &str, r: &str| format!("<<<<<< SEARCH\n{s}\n=======\n{r}\n>>>>>> REPLACE\n");
    let (c, out, err) = apply_patch(&block("    uint y;", "    uint z;"));
    assert_eq!(c, 0, "{err}");
    assert_eq!(out, SOURCE.replace("uint y;", "uint z;"));
    assert_eq!(apply_patch("just prose, no edits").0, 10);
    assert_eq!(apply_patch("<<<<<< SEARCH\n    uint y;\n>>>>>> REPLACE\n").0, 11);
    assert_eq!(apply_patch(&block("    uint w;", "    uint z;")).0, 12);
    let (c, _, err) = apply_patch(&block("    uint x;", "    uint z;"));
    assert_eq!(c, 13);
    assert!(err.contains('2'), "{err}");
}

#[test]
fn empty_dataset_sweep_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.jsonl"), "").unwrap();
    std::fs::create_dir(dir.path().join("mock")).unwrap();
    let o = solfix(
        dir.path(),
        &[
            "sweep",
            "--dataset",
            "d.jsonl",
            "--mock-dir",
            "mock",
            "--no-retrieval",
            "--max-iterations",
            "3",
        ],
    );
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    assert!(stderr(&o).contains("no reports"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_2_and_help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&solfix(dir.path(), &["fix"])), 2);
    assert_eq!(
        code(&solfix(
            dir.path(),
            &["sweep", "--dataset", "d", "--max-iterations", "0..3"]
        )),
        2
    );
    assert_eq!(code(&solfix(dir.path(), &["--help"])), 0);
}

#[test]
fn slice_by_location() {
    let dir = tempfile::tempdir().unwrap();
    let file = repo("fixtures/contracts/guess_game.sol");
    let o = solfix(
        dir.path(),
        &[
            "--json",
            "slice",
            file.to_str().unwrap(),
            "--line",
            "71",
            "--column",
            "9",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["covers_error_line"], true);
    assert_eq!(v["whole_file"], false);
}

fn keys(v: &serde_json::Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().expect("object").keys().cloned().collect();
    k.sort();
    k
}

#[test]
fn every_subcommand_runs_offline() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    let p = |rel: &str| repo(rel).to_string_lossy().into_owned();
    let ok = |o: &Output| assert_eq!(code(o), 0, "{}", stderr(o));

    let o = solfix(
        w,
        &[
            "--json",
            "kb",
            "build",
            "--html",
            &p("fixtures/kb/html"),
            "--labels",
            &p("fixtures/kb/labels.json"),
            "--out",
            "kb.jsonl",
        ],
    );
    ok(&o);
    assert_eq!(
        std::fs::read(w.join("kb.jsonl")).unwrap(),
        std::fs::read(repo("fixtures/kb/kb.jsonl")).unwrap()
    );
    ok(&solfix(
        w,
        &[
            "kb",
            "label-template",
            "--html",
            &p("fixtures/kb/html"),
            "--out",
            "labels.json",
        ],
    ));
    assert!(std::fs::read_to_string(w.join("labels.json"))
        .unwrap()
        .contains("430c5230d857"));
    let o = solfix(w, &["--json", "kb", "stats", "kb.jsonl"]);
    ok(&o);
    assert_eq!(json(&o)["entries"], 10);

    std::fs::write(
        w.join("eval.jsonl"),
        r#"{"query":"TypeError: \"send\" and \"transfer\" are only available for objects of type \"address payable\", not \"address\".","answer":"a","label":1,"groundtruth_id":"4ada65ec69ae"}
{"query":"ParserError: Expected '(' but got identifier byte","answer":"b","label":1,"groundtruth_id":"faf740f030dd"}
"#,
    )
    .unwrap();
    let o = solfix(
        w,
        &[
            "--json",
            "kb",
            "acc",
            "kb.jsonl",
            "--eval-set",
            "eval.jsonl",
            "-k",
            "1",
            "-k",
            "5",
        ],
    );
    ok(&o);
    assert!(o.stdout.len() > 2);

    // Two-instance slice of the dataset keeps this quick.
    let ds = std::fs::read_to_string(repo("fixtures/dataset/dataset.jsonl")).unwrap();
    let picked: Vec<&str> = ds
        .lines()
        .filter(|l| l.contains("\"id\": \"parser-byte\"") || l.contains("\"id\": \"type-transfer\""))
        .collect();
    assert_eq!(picked.len(), 2);
    std::fs::write(w.join("ds.jsonl"), picked.join("\n") + "\n").unwrap();
    let o = solfix(
        w,
        &[
            "--json",
            "batch",
            "--dataset",
            "ds.jsonl",
            "--mock-dir",
            &p("fixtures/dataset/mock"),
            "--kb",
            "kb.jsonl",
            "--reports",
            "reports.json",
        ],
    );
    ok(&o);
    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(w.join("reports.json")).unwrap()).unwrap();
    let first = &reports[0];
    assert_eq!(keys(first), ["final_source", "id", "iteration", "iterations", "status"]);
    assert_eq!(
        keys(&first["iterations"][0]),
        [
            "compile_after",
            "diagnostic",
            "granularity",
            "index",
            "patch",
            "prompt_sha256",
            "response_sha256",
            "retrieved",
            "slice"
        ]
    );

    let o = solfix(
        w,
        &[
            "--json",
            "eval",
            "--dataset",
            "ds.jsonl",
            "--reports",
            "reports.json",
            "--out",
            "summary.json",
        ],
    );
    ok(&o);
    let summary = json(&o);
    assert_eq!(
        keys(&summary),
        ["average", "categories", "fixed_only", "instances", "schema_version"]
    );
    assert_eq!(summary["average"]["pass_rate"], 100.0);

    let o = solfix(
        w,
        &[
            "sweep",
            "--dataset",
            "ds.jsonl",
            "--mock-dir",
            &p("fixtures/dataset/mock"),
            "--kb",
            "kb.jsonl",
            "--max-iterations",
            "2",
            "--out",
            "s.csv",
        ],
    );
    ok(&o);
    assert_eq!(
        std::fs::read_to_string(w.join("s.csv")).unwrap(),
        "max_iterations,pass_rate\n1,100.0000\n2,100.0000\n"
    );
    ok(&solfix(w, &["version"]));
}
