use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

/// Config with paths relative to the config file, as an operator would write it.
fn write_config(dir: &Path, stages: Value) -> PathBuf {
    std::fs::copy(fixtures().join("corpus_200.jsonl"), dir.join("corpus.jsonl")).unwrap();
    std::fs::copy(fixtures().join("mock_script.json"), dir.join("mock.json")).unwrap();
    let endpoint = json!({"base_url": "http://127.0.0.1:9", "mock_fixture": "mock.json", "max_concurrency": 4});
    let config = json!({
        "corpus": {"path": "corpus.jsonl"},
        "endpoints": {"backward": endpoint, "forward": endpoint, "rewriter": endpoint},
        "stages": stages,
        "paths": {"ledger": "run/ledger.jsonl", "output_dir": "run"},
        "analysis": {"mauve_seeds": 1, "mauve": {"num_clusters": 4}},
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn bft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bft"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout_json(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&output.stdout))
    })
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn setup(stages: Value) -> (TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), stages);
    (dir, config.to_str().unwrap().to_owned())
}

#[test]
fn run_writes_datasets_and_manifest() {
    let (dir, config) = setup(json!({"filtering": true, "rewriting": true}));
    let out = bft(&["run", "--config", &config]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = stdout_json(&out);
    assert_eq!(manifest["completed"], true);
    assert_eq!(manifest["datasets"]["dataset_initial.jsonl"], 50);
    assert_eq!(manifest["datasets"]["dataset_rewritten.jsonl"], 50);

    let run = dir.path().join("run");
    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, manifest);
    for name in ["dataset_initial.jsonl", "dataset_rewritten.jsonl", "analysis.json"] {
        assert!(run.join(name).exists(), "{name}");
    }
}

#[test]
fn stages_can_be_run_one_at_a_time() {
    let (dir, config) = setup(json!({"filtering": true, "rewriting": true}));
    let mut processed = Vec::new();
    for stage in ["ingest", "backtranslate", "score", "filter", "rewrite", "build", "analyze"] {
        let out = bft(&[stage, "--config", &config]);
        assert!(out.status.success(), "{stage}: {}", stderr(&out));
        let summary = stdout_json(&out);
        assert_eq!(summary["stage"], stage);
        processed.push(summary["processed"].as_u64().unwrap());
    }
    assert_eq!(processed[..5], [200, 200, 200, 200, 50]);
    let lines = std::fs::read_to_string(dir.path().join("run/dataset_rewritten.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 50);

    // a repeated stage does nothing
    let again = stdout_json(&bft(&["backtranslate", "--config", &config]));
    assert_eq!((again["processed"].as_u64(), again["skipped"].as_u64()), (Some(0), Some(200)));
}

#[test]
fn status_summarizes_the_ledger() {
    let (_dir, config) = setup(json!({"filtering": true, "rewriting": false}));
    assert!(bft(&["run", "--config", &config]).status.success());
    let out = bft(&["status", "--config", &config]);
    assert!(out.status.success(), "{}", stderr(&out));
    let status = stdout_json(&out);
    assert_eq!(status["records"], 200);
    assert_eq!(status["by_status"]["scored"], 50);
    assert_eq!(status["by_status"]["filtered_out"], 150);
    assert_eq!(status["pending_failures"], 0);
}

#[test]
fn interrupted_run_resumes() {
    let (_dir, config) = setup(json!({"filtering": false, "rewriting": false}));
    let out = bft(&["run", "--config", &config, "--crash-after", "250"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let refused = bft(&["run", "--config", &config]);
    assert_eq!(refused.status.code(), Some(1));
    assert!(stderr(&refused).contains("--resume"), "{}", stderr(&refused));
    let resumed = bft(&["run", "--config", &config, "--resume"]);
    assert!(resumed.status.success(), "{}", stderr(&resumed));
    let status = stdout_json(&bft(&["status", "--config", &config]));
    assert_eq!(status["by_status"]["backtranslated"], 200);
}

#[test]
fn changed_config_requires_force() {
    let (dir, config) = setup(json!({"filtering": true, "rewriting": false}));
    assert!(bft(&["run", "--config", &config]).status.success());
    let mut value: Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    value["seeds"] = json!({"sample_seed": 99});
    std::fs::write(dir.path().join("config.json"), value.to_string()).unwrap();
    let out = bft(&["run", "--config", &config, "--resume"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--force"), "{}", stderr(&out));
    let forced = bft(&["run", "--config", &config, "--resume", "--force"]);
    assert!(forced.status.success(), "{}", stderr(&forced));
}

#[test]
fn unknown_keys_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(
        &path,
        r#"{"corpus": {"path": "c.jsonl", "max_tokns": 9}, "endponts": {}, "endpoints": {"backward": {"base_url": "http://x"}}}"#,
    )
    .unwrap();
    let out = bft(&["ingest", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("endponts") && err.contains("corpus.max_tokns"), "{err}");
}

#[test]
fn missing_role_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(
        &path,
        r#"{"corpus": {"path": "c.jsonl"}, "endpoints": {"backward": {"base_url": "http://x"}, "forward": {"base_url": "http://y"}}, "stages": {"rewriting": true}}"#,
    )
    .unwrap();
    let out = bft(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("rewrite"), "{}", stderr(&out));
}

#[test]
fn missing_config_is_a_config_error() {
    assert_eq!(bft(&["run"]).status.code(), Some(2));
}

#[test]
fn unreadable_corpus_is_fatal() {
    let (dir, config) = setup(json!({"filtering": true}));
    std::fs::remove_file(dir.path().join("corpus.jsonl")).unwrap();
    let out = bft(&["ingest", "--config", &config]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("corpus.jsonl"), "{}", stderr(&out));
}
