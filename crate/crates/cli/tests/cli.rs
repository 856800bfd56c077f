//! Black-box tests of the `agentopic` binary: exit codes, output files,
//! and printed reports for every subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agentopic"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("process exited")
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

#[test]
fn preprocess_cleans_descriptions_and_reports_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let output = dir.path().join("out.csv");
    write(
        &input,
        "id,title,description,category\n\
         a1,Keep Title AS-IS,\"It's 2 GOOD days!! The markets were running higher.\",business\n\
         a2,Second,\"Don't panic; profits haven't fallen.\",business\n",
    );
    let result = bin()
        .args(["preprocess", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(&output)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "stderr: {}", stderr(&result));
    assert!(stdout(&result).contains("vocabulary"));

    let text = std::fs::read_to_string(&output).unwrap();
    assert!(text.contains("Keep Title AS-IS"));
    assert!(text.contains("good days markets run higher"));
}

#[test]
fn preprocess_missing_file_is_usage_error() {
    let result = bin()
        .args([
            "preprocess",
            "--input",
            "/nonexistent/corpus.csv",
            "--output",
            "/tmp/never.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&result), 2);
    assert!(stderr(&result).contains("file not found"));
}

#[test]
fn preprocess_malformed_row_is_operational_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    write(
        &input,
        "id,title,description\na1,T1,D1\na2,\"unterminated,D2\n",
    );
    let result = bin()
        .args(["preprocess", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(dir.path().join("out.csv"))
        .output()
        .unwrap();
    assert_eq!(code(&result), 1);
    assert!(
        stderr(&result).contains("line"),
        "stderr: {}",
        stderr(&result)
    );
}

#[test]
fn run_seeded_with_replay_fixture_succeeds_offline() {
    let dir = tempfile::tempdir().unwrap();
    let result = bin()
        .args(["run", "--mode", "seeded", "--backend", "replay"])
        .arg("--input")
        .arg(fixtures().join("bbc50.csv"))
        .arg("--seeds")
        .arg(fixtures().join("bbc50_seeds.txt"))
        .arg("--fixture")
        .arg(fixtures().join("bbc50.fixture.jsonl"))
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "stderr: {}", stderr(&result));
    assert!(stdout(&result).contains("50 assigned, 0 quarantined"));
    for name in [
        "augmented.csv",
        "predictions.csv",
        "trace.log",
        "run_result.json",
        "vectors.store",
        "checkpoint.json",
    ] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
}

#[test]
fn run_seeded_without_seeds_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let result = bin()
        .args(["run", "--mode", "seeded", "--backend", "mock"])
        .arg("--input")
        .arg(fixtures().join("bbc50.csv"))
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&result), 2);
    assert!(stderr(&result).contains("seeds"));
}

#[test]
fn run_generative_with_mock_writes_hierarchy_exports() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tiny.csv");
    write(
        &input,
        "id,title,description\n\
         d1,Alpha markets rally,Stocks rallied strongly today.\n\
         d2,Beta match report,The final match ended in a draw.\n\
         d3,Gamma election news,The election entered its last week.\n",
    );
    let out_dir = dir.path().join("out");
    let result = bin()
        .args(["run", "--mode", "generative", "--backend", "mock"])
        .arg("--input")
        .arg(&input)
        .arg("--output-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "stderr: {}", stderr(&result));
    let structured = out_dir.join("hierarchy.structured.json");
    let dot = out_dir.join("hierarchy.dot");
    assert!(structured.exists());
    assert!(dot.exists());
    let dot_text = std::fs::read_to_string(&dot).unwrap();
    assert!(dot_text.starts_with("digraph"));
    assert!(dot_text.contains("shape=box"));
}

fn two_class_inputs(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let truth = dir.join("truth.csv");
    write(
        &truth,
        "id,title,description,category\n\
         x1,T,D,A\nx2,T,D,A\nx3,T,D,B\n",
    );
    let predictions = dir.join("predictions.csv");
    write(&predictions, "id,predicted_label\nx1,A\nx2,B\nx3,B\n");
    let labels = dir.join("labels.txt");
    write(&labels, "A\nB\n");
    (truth, predictions, labels)
}

#[test]
fn eval_perfect_predictions_prints_ones() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.csv");
    write(
        &truth,
        "id,title,description,category\nx1,T,D,A\nx2,T,D,B\n",
    );
    let predictions = dir.path().join("preds.csv");
    write(&predictions, "id,predicted_label\nx1,A\nx2,B\n");
    let result = bin()
        .arg("eval")
        .arg("--truth")
        .arg(&truth)
        .arg("--predictions")
        .arg(&predictions)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "stderr: {}", stderr(&result));
    let text = stdout(&result);
    let row = text
        .lines()
        .find(|l| l.contains("predictions"))
        .expect("model row printed");
    assert_eq!(row.matches("1.00").count(), 3);
    assert!(predictions.with_extension("report.json").exists());
}

#[test]
fn eval_two_class_example_prints_expected_macro_f1() {
    let dir = tempfile::tempdir().unwrap();
    let (truth, predictions, labels) = two_class_inputs(dir.path());
    let result = bin()
        .arg("eval")
        .arg("--truth")
        .arg(&truth)
        .arg("--predictions")
        .arg(&predictions)
        .arg("--labels")
        .arg(&labels)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "stderr: {}", stderr(&result));
    let text = stdout(&result);
    assert_eq!(text.matches("0.67").count(), 3);
    assert!(text.contains("macro F1 0.6667"));
}

#[test]
fn eval_missing_ids_exits_one_listing_them() {
    let dir = tempfile::tempdir().unwrap();
    let (truth, predictions, labels) = two_class_inputs(dir.path());
    write(&predictions, "id,predicted_label\nx1,A\n");
    let result = bin()
        .arg("eval")
        .arg("--truth")
        .arg(&truth)
        .arg("--predictions")
        .arg(&predictions)
        .arg("--labels")
        .arg(&labels)
        .output()
        .unwrap();
    assert_eq!(code(&result), 1);
    let err = stderr(&result);
    assert!(err.contains("x2") && err.contains("x3"), "stderr: {err}");
}

fn valid_hierarchy_json() -> &'static str {
    r#"{
      "roots": [
        {"name": "Root", "description": "top", "children": [
          {"name": "A", "description": "", "children": [], "leaf_topics": ["a1", "a2"]},
          {"name": "B", "description": "", "children": [], "leaf_topics": ["b1"]}
        ], "leaf_topics": []}
      ],
      "max_depth": 6
    }"#
}

#[test]
fn hierarchy_stats_prints_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("h.json");
    write(&input, valid_hierarchy_json());
    let result = bin()
        .args(["hierarchy", "stats", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "stderr: {}", stderr(&result));
    let text = stdout(&result);
    assert!(text.contains("topics: 3"));
    assert!(text.contains("levels: 2"));
    assert!(text.contains("roots: 1"));
}

#[test]
fn hierarchy_prune_fixes_self_named_chain() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("chain.json");
    // Nested form: the flat node-list form cannot express a self-named
    // chain because parents are referenced by (unique) name.
    write(
        &input,
        r#"{"roots": [
            {"name": "Sports and Athletics", "description": "outer", "children": [
                {"name": "sports and athletics", "description": "inner", "children": [], "leaf_topics": ["hurdles"]}
            ], "leaf_topics": []}
        ], "max_depth": 6}"#,
    );
    let output = dir.path().join("pruned.json");
    let result = bin()
        .args(["hierarchy", "prune", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(&output)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "stderr: {}", stderr(&result));
    assert!(output.exists());

    let check = bin()
        .args(["hierarchy", "validate", "--input"])
        .arg(&output)
        .output()
        .unwrap();
    assert_eq!(code(&check), 0);
    assert!(stdout(&check).contains("valid"));
}

#[test]
fn hierarchy_validate_reports_cycle_path() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("cycle.json");
    write(
        &input,
        r#"{"nodes": [
            {"name": "A", "description": "", "parent": "B", "leaves": []},
            {"name": "B", "description": "", "parent": "A", "leaves": []}
        ]}"#,
    );
    let result = bin()
        .args(["hierarchy", "validate", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(code(&result), 1);
    assert!(stderr(&result).contains("cycle detected: A -> B -> A"));
}

#[test]
fn hierarchy_export_dot_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("h.json");
    write(&input, valid_hierarchy_json());
    let result = bin()
        .args(["hierarchy", "export", "--format", "dot", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0);
    let text = stdout(&result);
    assert!(text.starts_with("digraph"));
    assert_eq!(text.matches("->").count(), 5); // 2 node edges + 3 leaf edges
}

#[test]
fn record_with_mock_then_replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tiny.csv");
    write(
        &input,
        "id,title,description,category\n\
         d1,Business rally,The business outlook improved.,Business\n\
         d2,Sport final,The sport final was tense.,Sport\n",
    );
    let seeds = dir.path().join("seeds.txt");
    write(&seeds, "Business\nSport\n");
    let fixture = dir.path().join("session.jsonl");

    let record_dir = dir.path().join("rec");
    let record = bin()
        .args(["record", "--mode", "seeded", "--backend", "mock"])
        .arg("--input")
        .arg(&input)
        .arg("--seeds")
        .arg(&seeds)
        .arg("--fixture")
        .arg(&fixture)
        .arg("--output-dir")
        .arg(&record_dir)
        .output()
        .unwrap();
    assert_eq!(code(&record), 0, "stderr: {}", stderr(&record));
    assert!(fixture.exists());

    let replay_dir = dir.path().join("rep");
    let replay = bin()
        .args(["run", "--mode", "seeded", "--backend", "replay"])
        .arg("--input")
        .arg(&input)
        .arg("--seeds")
        .arg(&seeds)
        .arg("--fixture")
        .arg(&fixture)
        .arg("--output-dir")
        .arg(&replay_dir)
        .output()
        .unwrap();
    assert_eq!(code(&replay), 0, "stderr: {}", stderr(&replay));

    let recorded = std::fs::read(record_dir.join("augmented.csv")).unwrap();
    let replayed = std::fs::read(replay_dir.join("augmented.csv")).unwrap();
    assert_eq!(recorded, replayed);
}

// Guard against fixture rot: regenerating the checked-in bbc50 fixture with
// the mock backend must produce the same digest -> reply mapping.
#[test]
fn checked_in_fixture_matches_regeneration() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("regenerated.jsonl");
    let result = bin()
        .args(["record", "--mode", "seeded", "--backend", "mock"])
        .arg("--input")
        .arg(fixtures().join("bbc50.csv"))
        .arg("--seeds")
        .arg(fixtures().join("bbc50_seeds.txt"))
        .arg("--fixture")
        .arg(&fixture)
        .arg("--output-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "stderr: {}", stderr(&result));

    let digest_map = |path: &Path| -> std::collections::BTreeMap<String, String> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let record: serde_json::Value = serde_json::from_str(l).unwrap();
                (
                    record["digest"].as_str().unwrap().to_string(),
                    record["reply"].to_string(),
                )
            })
            .collect()
    };
    let checked_in = digest_map(&fixtures().join("bbc50.fixture.jsonl"));
    let regenerated = digest_map(&fixture);
    assert_eq!(checked_in, regenerated);
}

#[test]
fn config_set_overrides_are_honored() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tiny.csv");
    write(
        &input,
        "id,title,description\nd1,Alpha story lead,Something happened today.\n",
    );
    let out_dir = dir.path().join("out");
    // Disabling the relevance pass halves the chat calls per document.
    let result = bin()
        .args([
            "run",
            "--mode",
            "generative",
            "--backend",
            "mock",
            "--set",
            "workflow.relevance_review=false",
            "--refinement-iterations",
            "0",
        ])
        .arg("--input")
        .arg(&input)
        .arg("--output-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "stderr: {}", stderr(&result));
    let trace = std::fs::read_to_string(out_dir.join("trace.log")).unwrap();
    assert!(!trace.contains("review_llm"));
}
