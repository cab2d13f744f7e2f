mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xlrank::runfile::parse_run_file;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn xlrank(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xlrank"))
        .args(args)
        .arg("--output")
        .arg(out)
        .env_remove("XLRANK_SCORER_URL")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Port with nothing listening.
fn dead_url() -> String {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    format!("http://127.0.0.1:{port}")
}

#[test]
fn search_writes_top_k_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = xlrank(
        &[
            "search",
            "--embeddings", arg(&fixture("tiny_passages.txt")),
            "--queries", arg(&fixture("tiny_queries.txt")),
            "--passages", arg(&fixture("tiny_passages.jsonl")),
            "--questions", arg(&fixture("tiny_questions.jsonl")),
            "--k", "2",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = read(dir.path().join("search.jsonl"));
    assert_eq!(text.lines().count(), 1);
    let runs = parse_run_file(dir.path().join("search.jsonl")).unwrap();
    let ids: Vec<_> = runs[0].candidates.iter().map(|c| c.passage.id.as_str()).collect();
    assert_eq!(ids, ["p1", "p3"]);
    assert!(runs[0].candidates[0].is_positive);
    assert_eq!(runs[0].candidates[0].passage.text, "first passage");
    assert_eq!(runs[0].total_positives, Some(1));
}

#[test]
fn search_k_beyond_corpus_ranks_everything() {
    let dir = tempfile::tempdir().unwrap();
    let o = xlrank(
        &["search", "--embeddings", arg(&fixture("tiny_passages.txt")), "--queries", arg(&fixture("tiny_queries.txt")), "--k", "10"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let runs = parse_run_file(dir.path().join("search.jsonl")).unwrap();
    assert_eq!(runs[0].candidates.len(), 4);
    // Tie on p2 / p4 is impossible here; the last one has score 0.
    assert_eq!(runs[0].candidates[3].passage.id, "p4");
}

#[test]
fn search_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"XLEM\x01\x00\x00\x00\x05").unwrap();
    let o = xlrank(&["search", "--embeddings", arg(&bad), "--queries", arg(&fixture("tiny_queries.txt"))], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("offset"), "{}", stderr(&o));

    let q = dir.path().join("q.txt");
    std::fs::write(&q, "dim=2\nq1\t1,0\n").unwrap();
    let o = xlrank(&["search", "--embeddings", arg(&fixture("tiny_passages.txt")), "--queries", arg(&q)], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("dimension"));

    let o = xlrank(&["search", "--embeddings", "/nonexistent/m.bin", "--queries", arg(&q)], dir.path());
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("search.jsonl").exists());
}

#[test]
fn rerank_output_is_byte_stable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let input = fixture("runs_mixed.jsonl");
    let o = xlrank(&["rerank", "--input", arg(&input), "--workers", "1"], a.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = xlrank(&["rerank", "--input", arg(&input), "--workers", "4"], b.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["reranked.jsonl", "rerank_report.jsonl", "rerank_errors.jsonl"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let before = parse_run_file(&input).unwrap();
    let after = parse_run_file(a.path().join("reranked.jsonl")).unwrap();
    for (x, y) in before.iter().zip(&after) {
        let mut xs: Vec<_> = x.candidates.iter().map(|c| &c.passage.id).collect();
        let mut ys: Vec<_> = y.candidates.iter().map(|c| &c.passage.id).collect();
        xs.sort();
        ys.sort();
        assert_eq!(xs, ys);
        assert_eq!(y.total_positives, Some(x.count_pool_positives()));
    }
    assert_eq!(read(a.path().join("rerank_errors.jsonl")), "");
}

fn runs_with_failure(dir: &Path) -> PathBuf {
    let mut text = read(fixture("runs_mixed.jsonl"));
    text.push_str(r#"{"q_id":"broken","question":"¿?","lang":"es","ctxs":[{"id":"x1","text":"texto","is_positive":true}]}"#);
    text.push('\n');
    let p = dir.join("with_failure.jsonl");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn rerank_skip_policy_records_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = runs_with_failure(dir.path());
    let out = dir.path().join("out");
    let o = xlrank(&["rerank", "--input", arg(&input), "--policy", "skip"], &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let errors = read(out.join("rerank_errors.jsonl"));
    assert_eq!(errors.lines().count(), 1);
    assert!(errors.contains(r#""q_id":"broken""#));
    assert_eq!(read(out.join("reranked.jsonl")).lines().count(), 6);
}

#[test]
fn rerank_fail_fast_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let input = runs_with_failure(dir.path());
    let out = dir.path().join("out");
    let o = xlrank(&["rerank", "--input", arg(&input)], &out);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("broken"));
    assert!(!out.join("reranked.jsonl").exists());
}

#[test]
fn rerank_through_scoring_service_matches_builtin() {
    let stub = common::reference_service(vec![]);
    let local = tempfile::tempdir().unwrap();
    let remote = tempfile::tempdir().unwrap();
    let input = fixture("runs_mixed.jsonl");
    assert_eq!(code(&xlrank(&["rerank", "--input", arg(&input)], local.path())), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_xlrank"))
        .args(["rerank", "--input", arg(&input), "--output", arg(remote.path())])
        .env("XLRANK_SCORER_URL", &stub.url)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stub.count("/v1/score") > 0);
    assert_eq!(stub.count("/v1/health"), 1);
    assert_eq!(
        read(local.path().join("reranked.jsonl")),
        read(remote.path().join("reranked.jsonl"))
    );
}

#[test]
fn unreachable_scorer_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("x.toml");
    std::fs::write(&cfg, format!("[scorer]\nurl = \"{}\"\nmax_retries = 1\nbackoff_base_ms = 1\n", dead_url())).unwrap();
    let o = xlrank(&["rerank", "--config", arg(&cfg), "--input", arg(&fixture("runs_mixed.jsonl"))], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    // Flag beats config.
    let o = xlrank(
        &["rerank", "--config", arg(&cfg), "--scorer", "builtin", "--input", arg(&fixture("runs_mixed.jsonl"))],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn rerank_modes_from_config_and_mapping_translator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("x.toml");
    std::fs::write(
        &cfg,
        format!(
            "workers = 2\n[rerank]\nmode = \"passage_translated\"\n[translator]\nmapping_file = \"{}\"\n",
            fixture("mapping.json").display()
        ),
    )
    .unwrap();
    let o = xlrank(&["rerank", "--config", arg(&cfg), "--input", arg(&fixture("runs_mixed.jsonl"))], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read(dir.path().join("rerank_report.jsonl"));
    assert!(report.lines().all(|l| l.contains(r#""mode":"passage_translated""#)));

    let o = xlrank(
        &["rerank", "--config", arg(&cfg), "--mode", "language_tagged", "--input", arg(&fixture("runs_mixed.jsonl"))],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(read(dir.path().join("rerank_report.jsonl")).contains("language_tagged"));
}

#[test]
fn evaluate_two_runs_emits_gain() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&xlrank(&["rerank", "--input", arg(&fixture("runs_mixed.jsonl"))], dir.path())), 0);
    let reranked = dir.path().join("reranked.jsonl");
    let o = xlrank(
        &["evaluate", "--run", arg(&fixture("runs_mixed.jsonl")), "--run", arg(&reranked), "--name", "base", "--name", "qg"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = read(dir.path().join("metrics.txt"));
    assert!(table.contains("Gain"));
    assert!(read(dir.path().join("gain.txt")).starts_with("Gain: qg - base\n"));
    let records = read(dir.path().join("metrics.jsonl"));
    for m in ["P@5", "P@15", "R@5", "R@15", "MRR-Same", "MRR-Cross"] {
        assert!(records.contains(&format!(r#""metric":"{m}""#)), "{m}");
    }
    assert_eq!(String::from_utf8(o.stdout).unwrap(), table);
}

#[test]
fn evaluate_single_run_has_no_gain() {
    let dir = tempfile::tempdir().unwrap();
    let o = xlrank(&["evaluate", "--run", arg(&fixture("runs_mixed.jsonl")), "--ks", "1,3"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!dir.path().join("gain.txt").exists());
    let table = read(dir.path().join("metrics.txt"));
    assert!(!table.contains("Gain"));
    assert!(table.contains("R@3"));
}

#[test]
fn evaluate_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = xlrank(&["evaluate", "--run", arg(&fixture("runs_mixed.jsonl"))], dir.path());
    assert_eq!(code(&o), 0);
    let first = read(dir.path().join("metrics.txt"));
    let again = tempfile::tempdir().unwrap();
    let o = xlrank(&["evaluate", "--records", arg(&dir.path().join("metrics.jsonl"))], again.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(again.path().join("metrics.txt")), first);
    assert_eq!(read(again.path().join("metrics.jsonl")), read(dir.path().join("metrics.jsonl")));
}

#[test]
fn evaluate_excludes_unresolvable_languages() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("runs.jsonl");
    std::fs::write(
        &p,
        concat!(
            r#"{"q_id":"a","question":"서울?","lang":"ko","ctxs":[{"id":"1","text":"12345","is_positive":true}]}"#, "\n",
            r#"{"q_id":"b","question":"서울?","lang":"ko","ctxs":[{"id":"2","text":"서울","is_positive":true}]}"#, "\n",
        ),
    )
    .unwrap();
    let o = xlrank(&["evaluate", "--run", arg(&p)], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(read(dir.path().join("metrics.txt")).contains("excluded 1 question(s): a"));
    assert!(read(dir.path().join("metrics.jsonl")).contains(r#""n":1"#));
}

#[test]
fn evaluate_rejects_depth_below_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    let o = xlrank(&["evaluate", "--run", arg(&fixture("runs_mixed.jsonl")), "--ks", "5,100"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn augment_identity_keeps_filter_passing() {
    let dir = tempfile::tempdir().unwrap();
    let o = xlrank(
        &["augment", "--input", arg(&fixture("augment_100.jsonl")), "--target-langs", "ko", "--translator", "identity"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path().join("augment_summary.json"))).unwrap();
    assert_eq!(summary["per_language"][0]["kept"], 63);
    assert_eq!(summary["per_language"][0]["dropped"], 37);
    assert_eq!(read(dir.path().join("augmented.jsonl")).lines().count(), 63);
}

#[test]
fn augment_mapping_matches_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = xlrank(
        &[
            "augment",
            "--input", arg(&fixture("augment_source.jsonl")),
            "--target-langs", "ko",
            "--translator", arg(&fixture("augment_mapping.json")),
            "--reader-inputs",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(dir.path().join("augmented.jsonl")), read(fixture("augment_expected_ko.jsonl")));
    assert_eq!(read(dir.path().join("reader_inputs.jsonl")).lines().count(), 2);
}

#[test]
fn augment_through_translation_service() {
    let stub = common::reference_service(vec![("Paris", "파리"), ("The capital of France is Paris.", "프랑스의 수도는 파리이다.")]);
    let dir = tempfile::tempdir().unwrap();
    let o = xlrank(
        &["augment", "--input", arg(&fixture("augment_source.jsonl")), "--target-langs", "ko", "--translator", &stub.url],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = read(dir.path().join("augmented.jsonl"));
    assert!(out.contains("파리"));
    // Unmapped texts come back unchanged, so the English answers still match.
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn augment_unreachable_translator_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("x.toml");
    std::fs::write(&cfg, "[translator]\nmax_retries = 0\n").unwrap();
    let o = xlrank(
        &["augment", "--config", arg(&cfg), "--input", arg(&fixture("augment_source.jsonl")), "--translator", &dead_url()],
        dir.path(),
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!dir.path().join("augmented.jsonl").exists());
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("x.toml");
    std::fs::write(&cfg, "[rerank]\nmode = \"sideways\"\n").unwrap();
    let o = xlrank(&["rerank", "--config", arg(&cfg), "--input", arg(&fixture("runs_mixed.jsonl"))], dir.path());
    assert_eq!(code(&o), 2);
    let o = xlrank(&["rerank", "--input", "/nonexistent/runs.jsonl"], dir.path());
    assert_eq!(code(&o), 2);
}
