use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use rolesearch_core::synth::{generate, SynthCorpus, SynthSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rolesearch"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The same corpus the `synth` command writes with these options.
fn expected_corpus() -> SynthCorpus {
    generate(&SynthSpec {
        docs_per_cell: 8,
        ..SynthSpec::default()
    })
}

fn build_index(root: &Path) -> std::path::PathBuf {
    let data = root.join("data");
    let index = root.join("index");
    let msg = ok(&["synth", "--out", s(&data), "--docs-per-cell", "8"]);
    assert!(msg.contains("72 documents"), "{msg}");
    let msg = ok(&["etl", s(&data.join("corpus")), "--out", s(&index)]);
    assert!(msg.starts_with("indexed 72 documents"), "{msg}");
    let msg = ok(&["entities", "--index", s(&index), "--structure", s(&data.join("structure.tsv")), "--no-exclusions"]);
    assert!(msg.contains("72 of 72 documents"), "{msg}");
    ok(&["train", "--index", s(&index), "--topics", "3", "--sweeps", "40", "--quiet"]);
    index
}

#[test]
fn build_search_and_inspect() {
    let root = tempfile::tempdir().unwrap();
    let index = build_index(root.path());
    let corpus = expected_corpus();

    let topics = ok(&["topics", "show", "--index", s(&index), "--top", "4"]);
    assert_eq!(topics.lines().count(), 3);
    assert!(topics.lines().all(|l| l.split('\t').nth(1).unwrap().split(' ').count() == 4));
    let by_model = ok(&["topics", "show", "--model", s(&index.join("model.tsv")), "--top", "4"]);
    assert_eq!(by_model, topics);

    let q = &corpus.query_words[0][0];
    let hits = ok(&["search", "--index", s(&index), "--query", q, "--k", "5"]);
    let lines: Vec<Vec<&str>> = hits.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines.iter().map(|l| l[0]).collect::<Vec<_>>(), ["1", "2", "3", "4", "5"]);
    assert!(lines.iter().all(|l| l.len() == 4 && l[2].parse::<f64>().is_ok()));

    let json = ok(&["search", "--index", s(&index), "--query", &format!("{q} zzyzx"), "--k", "2", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["out_of_vocabulary"], serde_json::json!(["zzyzx"]));

    let records = root.path().join("records.jsonl");
    let data = root.path().join("data");
    let table = ok(&[
        "eval",
        "--index",
        s(&index),
        "--qrels",
        s(&data.join("qrels.txt")),
        "--queries",
        s(&data.join("queries.jsonl")),
        "--strategies",
        "keyword,keyword+entity",
        "--records",
        s(&records),
    ]);
    assert!(table.contains("keyword+entity"), "{table}");
    let n_records = std::fs::read_to_string(&records).unwrap().lines().count();
    assert!(n_records >= 2 * corpus.queries.len());
}

/// Answers the interactive prompts from the planted labels.
fn define_interactively(index: &Path, corpus: &SynthCorpus) -> String {
    let mut child = bin()
        .args(["define-topic", "--index", s(index), "--name", "disasters", "--seed", &corpus.topic_words[0][0]])
        .args(["--suggestions", "6", "--rounds", "2", "--band", "6"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = child.stdout.take().unwrap();
    let mut seen = String::new();
    let mut buf = [0u8; 4096];
    loop {
        let n = stdout.read(&mut buf).unwrap();
        if n == 0 {
            break;
        }
        seen.push_str(&String::from_utf8_lossy(&buf[..n]));
        if !seen.ends_with("? ") {
            continue;
        }
        let last = seen.lines().last().unwrap();
        let answer = if last.trim() == "relevant?" {
            let doc_id = seen.rsplit_once("  [").unwrap().1.split(']').next().unwrap();
            let label = corpus.labels.iter().find(|l| l.doc_id == doc_id).unwrap();
            if label.topic == 0 { "y" } else { "n" }
        } else {
            let word = last.split_whitespace().next().unwrap();
            if corpus.topic_words[0].iter().any(|w| w == word) { "y" } else { "n" }
        };
        writeln!(stdin, "{answer}").unwrap();
        seen.push('\n');
    }
    let status = child.wait().unwrap();
    let mut err = String::new();
    child.stderr.take().unwrap().read_to_string(&mut err).unwrap();
    assert!(status.success(), "{err}\n{seen}");
    seen
}

#[test]
fn define_topic_and_roles() {
    let root = tempfile::tempdir().unwrap();
    let index = build_index(root.path());
    let corpus = expected_corpus();

    let transcript = define_interactively(&index, &corpus);
    assert!(transcript.contains("created topic t1"), "{transcript}");
    assert!(transcript.contains("calibrated t1"), "{transcript}");
    let closest: Vec<&str> = transcript
        .split("closest documents:\n")
        .nth(1)
        .unwrap()
        .lines()
        .map(|l| l.trim().split('\t').next().unwrap())
        .collect();
    assert_eq!(closest.len(), 10);
    let in_block = closest
        .iter()
        .filter(|id| corpus.labels.iter().any(|l| &l.doc_id == *id && l.topic == 0))
        .count();
    assert!(in_block >= 8, "{transcript}");

    let region = &corpus.region_names[0];
    let role = ok(&["role", "create", "--index", s(&index), "--name", "analyst", "--entity", region, "--topic", "disasters"]);
    let role: serde_json::Value = serde_json::from_str(&role).unwrap();
    assert_eq!(role["entity_target"], "R0");
    assert_eq!(role["user_topic"], "t1");
    assert_eq!(role["lambda1"], 0.07);

    let dup = run(&["role", "create", "--index", s(&index), "--name", "analyst"]);
    assert!(!dup.status.success());
    assert!(String::from_utf8_lossy(&dup.stderr).contains("already exists"));
    let missing = run(&["role", "create", "--index", s(&index), "--name", "x", "--topic", "nothing"]);
    assert!(!missing.status.success());

    let list = ok(&["role", "list", "--index", s(&index)]);
    assert_eq!(list.trim(), "r1\tanalyst\tR0\tt1\t0.07\t0.9");

    let hits = ok(&["search", "--index", s(&index), "--query", &corpus.query_words[0][0], "--role", "r1", "--k", "6"]);
    assert_eq!(hits.lines().count(), 6);
    let browse = ok(&["search", "--index", s(&index), "--role", "r1", "--k", "3"]);
    assert_eq!(browse.lines().count(), 3);
}

#[test]
fn convert_geonames_table() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base.tsv");
    std::fs::write(
        &base,
        "# rolesearch knowledge-structure v1\nnode\tasia\tregion\tAsia\t\nnode\tCN\tcountry\tChina\t\nedge\tasia\tCN\t1.0\n",
    )
    .unwrap();
    let table = dir.path().join("cities.txt");
    std::fs::write(&table, "Beijing\tCN\t20000000\nTinyville\tCN\t500\nParis\tFR\t2000000\n").unwrap();
    let out = dir.path().join("structure.tsv");
    let msg = ok(&["convert-geonames", "--base", s(&base), "--table", s(&table), "--out", s(&out)]);
    assert!(msg.starts_with("added 1 cities"), "{msg}");
    assert!(msg.contains("1 below population, 1 unknown country"), "{msg}");
    assert!(std::fs::read_to_string(&out).unwrap().contains("Beijing"));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["search", "--index", s(&dir.path().join("none")), "--query", "x"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let index = build_index(dir.path());
    let busy = run(&["serve", "--index", s(&index), "--addr", &addr]);
    assert!(!busy.status.success());
    assert!(String::from_utf8_lossy(&busy.stderr).contains("serving on"));

    assert!(!run(&["eval", "--index", s(&index), "--qrels", "q", "--queries", "q", "--strategies", "magic"]).status.success());
}
