mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{fixture_suite, planted_fixture, set_of, one_token, write_jsonl, BIN};
use serde_json::Value;
use uq_core::harness::Measure;
use uq::pipeline::{ACCURACY_GROUPS, CALIBRATION, DOMAIN_REPORT, EVALUATED, PLOTDATA};

fn uq(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").env_remove("UQ_BACKEND_URL").output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const CAPITALS: &str = r#"{
    "vocab": ["Paris", "paris", "Rome", "<stop>"],
    "stop": 3,
    "table": {"": [0.5, 0.3, 0.2, 0.0], "0": [0, 0, 0, 1], "1": [0, 0, 0, 1], "2": [0, 0, 0, 1]},
    "model_id": "capitals"
}"#;

#[test]
fn ingest_counts_good_and_bad_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sets.jsonl");
    write_jsonl(&path, &fixture_suite());
    let mut body = std::fs::read_to_string(&path).unwrap();
    let good = body.lines().count();
    body.push_str("{broken\n");
    std::fs::write(&path, body).unwrap();

    let text = stdout(&uq(&["ingest", "--schema", "sample_set", p(&path)]));
    assert_eq!(text, format!("records: {good}\nerrors: 1\n"));

    let strict = uq(&["ingest", "--schema", "sample_set", "--strict", p(&path)]);
    assert_eq!(strict.status.code(), Some(1));
    let err = String::from_utf8_lossy(&strict.stderr);
    assert!(err.contains(&format!("line {}", good + 1)), "{err}");
}

#[test]
fn ingest_rejects_unknown_schema_and_missing_file() {
    assert!(!uq(&["ingest", "--schema", "nope", "x.jsonl"]).status.success());
    let out = uq(&["ingest", "--schema", "benchmark", "/nonexistent/x.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("opening"));
}

#[test]
fn score_writes_one_report_per_set() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("sets.jsonl");
    let sets = vec![
        set_of("merged", vec![one_token("Tokyo", 0, 0.6), one_token("tokyo.", 1, 0.3)]),
        set_of("apart", vec![one_token("Tokyo", 0, 0.6), one_token("Kyoto", 1, 0.3)]),
    ];
    write_jsonl(&input, &sets);
    let text = stdout(&uq(&["score", "--input", p(&input)]));
    let reports: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(reports.len(), 2);

    assert_eq!(reports[0]["num_clusters"], 1);
    assert!((reports[0]["se"].as_f64().unwrap() + 0.9f64.ln()).abs() < 1e-12);
    assert_eq!(reports[1]["num_clusters"], 2);
    let apart = -(0.6f64.ln() + 0.3f64.ln()) / 2.0;
    assert!((reports[1]["se"].as_f64().unwrap() - apart).abs() < 1e-12);
    let pe = -(0.6 * 0.6f64.ln() + 0.3 * 0.3f64.ln()) / 2.0;
    assert!((reports[1]["pe"].as_f64().unwrap() - pe).abs() < 1e-12);

    let output = dir.path().join("reports.jsonl");
    let ll = stdout(&uq(&["score", "--input", p(&input), "--output", p(&output), "--variant", "log_likelihood"]));
    assert!(ll.is_empty());
    let first: Value = serde_json::from_str(std::fs::read_to_string(&output).unwrap().lines().next().unwrap()).unwrap();
    let pe = -(0.6f64.ln() + 0.3f64.ln()) / 2.0;
    assert!((first["pe"].as_f64().unwrap() - pe).abs() < 1e-12);
}

#[test]
fn score_dedup_exact_drops_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("sets.jsonl");
    write_jsonl(&input, &[set_of("q", vec![one_token("yes", 0, 0.5), one_token("Yes.", 1, 0.25)])]);
    let text = stdout(&uq(&["score", "--input", p(&input), "--dedup-exact"]));
    let report: Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(report["per_sequence_entropy"].as_array().unwrap().len(), 1);
}

#[test]
fn score_fails_on_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.jsonl");
    std::fs::write(&input, r#"{"query":"q","samples":[],"model_id":"m"}"#).unwrap();
    let out = uq(&["score", "--input", p(&input)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn entailment_oracle_requires_url() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("sets.jsonl");
    write_jsonl(&input, &[set_of("q", vec![one_token("yes", 0, 0.5)])]);
    let out = Command::new(BIN)
        .args(["score", "--input", p(&input), "--oracle", "entailment"])
        .env_remove("UQ_ENTAILMENT_URL")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("entailment URL"));
}

#[test]
fn cluster_lists_members_and_texts() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("sets.jsonl");
    write_jsonl(
        &input,
        &[set_of("capital", vec![one_token("Rome", 0, 0.1), one_token("Paris", 1, 0.6), one_token("paris.", 2, 0.3)])],
    );
    let text = stdout(&uq(&["cluster", "--input", p(&input)]));
    let line: Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(line["query"], "capital");
    let clusters = line["clusters"].as_array().unwrap();
    assert_eq!(clusters.len(), 2);
    assert_eq!(clusters[0]["texts"], serde_json::json!(["Paris", "paris."]));
    assert_eq!(clusters[1]["texts"], serde_json::json!(["Rome"]));
}

#[test]
fn generate_prints_a_sample_set() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("model.json");
    std::fs::write(&spec, CAPITALS).unwrap();
    let text = stdout(&uq(&["generate", "--model-spec", p(&spec), "--prompt", "capital of France?", "--max-tokens", "2"]));
    assert_eq!(text.lines().count(), 1);
    let set: Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(set["query"], "capital of France?");
    assert_eq!(set["model_id"], "capitals");
    let texts: Vec<&str> = set["samples"].as_array().unwrap().iter().map(|s| s["text"].as_str().unwrap()).collect();
    assert_eq!(texts, ["Paris", "paris", "Rome"]);
    let first = set["samples"][0]["tokens"][0]["logprob"].as_f64().unwrap();
    assert!((first - 0.5f64.ln()).abs() < 1e-12);

    let sampled = stdout(&uq(&[
        "generate", "--model-spec", p(&spec), "--method", "temperature", "--num-return-sequences", "7", "--seed", "4",
        "--max-tokens", "2",
    ]));
    let set: Value = serde_json::from_str(sampled.trim()).unwrap();
    assert_eq!(set["samples"].as_array().unwrap().len(), 7);
    let again = stdout(&uq(&[
        "generate", "--model-spec", p(&spec), "--method", "temperature", "--num-return-sequences", "7", "--seed", "4",
        "--max-tokens", "2",
    ]));
    assert_eq!(sampled, again);
}

#[test]
fn generate_errors() {
    let out = uq(&["generate", "--prompt", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model-spec or --backend-url"));

    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("model.json");
    std::fs::write(&spec, CAPITALS).unwrap();
    let out = uq(&["generate", "--model-spec", p(&spec), "--method", "top_p", "--top-p", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("top_p"));

    std::fs::write(&spec, r#"{"vocab": ["a"], "stop": 4, "table": {}}"#).unwrap();
    let out = uq(&["generate", "--model-spec", p(&spec)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid model spec"));
}

#[test]
fn eval_writes_all_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let (records, sets) = planted_fixture(60);
    let bench = dir.path().join("bench.jsonl");
    let gens = dir.path().join("gens.jsonl");
    write_jsonl(&bench, &records);
    write_jsonl(&gens, &sets);
    let out_dir = dir.path().join("out");
    let out = uq(&["eval", "--benchmark", p(&bench), "--generations", p(&gens), "--out-dir", p(&out_dir)]);
    stdout(&out);

    let csv = std::fs::read_to_string(out_dir.join(DOMAIN_REPORT)).unwrap();
    assert_eq!(csv.lines().count(), 1 + common::DOMAINS.len());
    assert!(csv.lines().skip(1).all(|l| l.contains("planted-model")));

    let evaluated = std::fs::read_to_string(out_dir.join(EVALUATED)).unwrap();
    assert_eq!(evaluated.lines().count(), 60);
    let correct = evaluated.lines().filter(|l| serde_json::from_str::<Value>(l).unwrap()["is_correct"] == true).count();
    assert_eq!(correct, (0..60).filter(|&j| common::planted(j).correct).count());

    let groups: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join(ACCURACY_GROUPS)).unwrap()).unwrap();
    // pooled plus one set per benchmark
    let reports = 3 * Measure::ALL.len();
    assert_eq!(groups.as_array().unwrap().len(), reports);
    let calib: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join(CALIBRATION)).unwrap()).unwrap();
    assert_eq!(calib.as_array().unwrap().len(), reports);
    let plot: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join(PLOTDATA)).unwrap()).unwrap();
    for point in plot.as_array().unwrap() {
        assert!(point["label"].is_string() && point["group"].is_string() && point["value"].is_f64());
    }
}

#[test]
fn eval_fails_on_unwritable_out_dir_and_missing_sets() {
    let dir = tempfile::tempdir().unwrap();
    let (records, sets) = planted_fixture(10);
    let bench = dir.path().join("bench.jsonl");
    let gens = dir.path().join("gens.jsonl");
    write_jsonl(&bench, &records);
    write_jsonl(&gens, &sets);
    // a directory cannot be created beneath a regular file
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out_dir = blocker.join("out");
    let out = uq(&["eval", "--benchmark", p(&bench), "--generations", p(&gens), "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("creating"));

    write_jsonl(&gens, &sets[1..]);
    let out = uq(&["eval", "--benchmark", p(&bench), "--generations", p(&gens), "--out-dir", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no sample set"));
}
