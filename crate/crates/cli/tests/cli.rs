//! End-to-end tests of the `od` binary: exit codes, output shapes, and
//! determinism, driven through real process invocations.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn od(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_od"))
        .args(args)
        .current_dir(dir)
        // Tests must never talk to a live endpoint.
        .env_remove("OD_LLM_API_KEY")
        .env_remove("OD_LLM_ENDPOINT")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal exit")
}

/// Generates a labeled blob CSV in `dir` and returns its path.
fn synth_blob(dir: &Path, seed: u64, name: &str, unlabeled: bool) -> PathBuf {
    let path = dir.join(name);
    let seed_text = seed.to_string();
    let mut args = vec![
        "synth",
        "blob",
        "--seed",
        &seed_text,
        "--out",
        path.to_str().unwrap(),
    ];
    if unlabeled {
        args.push("--unlabeled");
    }
    let out = od(&args, dir);
    assert_eq!(exit_code(&out), 0, "synth failed: {}", stderr(&out));
    path
}

#[test]
fn profile_json_is_a_single_object() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_blob(dir.path(), 0, "blob.csv", false);
    let out = od(&["profile", csv.to_str().unwrap(), "--json"], dir.path());
    assert_eq!(exit_code(&out), 0);
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("one JSON object");
    assert_eq!(value["n"], 500);
    assert_eq!(value["d"], 8);
    assert_eq!(value["anomaly_ratio"], 0.05);
}

#[test]
fn profile_missing_file_is_a_data_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = od(&["profile", "no_such_file.csv"], dir.path());
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("no_such_file.csv"), "{}", stderr(&out));
}

#[test]
fn select_offline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_blob(dir.path(), 0, "blob.csv", false);
    let first = od(&["select", csv.to_str().unwrap(), "--offline"], dir.path());
    let second = od(&["select", csv.to_str().unwrap(), "--offline"], dir.path());
    assert_eq!(exit_code(&first), 0, "{}", stderr(&first));
    assert_eq!(stdout(&first), stdout(&second));
    assert!(stdout(&first).contains("chosen: "));
    assert!(stdout(&first).contains("reason: "));
}

#[test]
fn select_without_key_or_offline_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_blob(dir.path(), 0, "blob.csv", false);
    let out = od(&["select", csv.to_str().unwrap()], dir.path());
    assert_eq!(exit_code(&out), 1);
    let message = stderr(&out);
    assert!(message.contains("OD_LLM_API_KEY"), "{message}");
    assert!(message.contains("--offline"), "{message}");
}

#[test]
fn select_with_delta_minus_one_keeps_the_whole_pool() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_blob(dir.path(), 0, "blob.csv", false);
    let audit = dir.path().join("audit.json");
    let out = od(
        &[
            "select",
            csv.to_str().unwrap(),
            "--offline",
            "--delta",
            "-1",
            "--out",
            audit.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&audit).unwrap()).unwrap();
    let candidates = value["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 9, "all models stay candidates at delta=-1");
}

#[test]
fn fit_then_score_reproduces_stored_train_scores() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_blob(dir.path(), 1, "blob.csv", false);
    let model = dir.path().join("knn.json");
    let out = od(
        &[
            "fit",
            "knn",
            csv.to_str().unwrap(),
            "--model-out",
            model.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));

    let scores_file = dir.path().join("scores.csv");
    let out = od(
        &[
            "score",
            csv.to_str().unwrap(),
            "--model-in",
            model.to_str().unwrap(),
            "--scores-out",
            scores_file.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));

    let stored: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    let train_scores: Vec<f64> = stored["model"]["train_scores"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let rescored: Vec<f64> = std::fs::read_to_string(&scores_file)
        .unwrap()
        .lines()
        .map(|line| line.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(train_scores.len(), 500);
    assert_eq!(train_scores, rescored, "scoring training data must reproduce train_scores");
}

#[test]
fn score_with_mismatched_width_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let blob = synth_blob(dir.path(), 1, "blob.csv", false);
    let model = dir.path().join("knn.json");
    let out = od(
        &["fit", "knn", blob.to_str().unwrap(), "--model-out", model.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0);

    // A 15-feature dataset against an 8-feature model.
    let wide = dir.path().join("wide.csv");
    let out = od(
        &["synth", "skewed", "--seed", "0", "--out", wide.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0);
    let out = od(
        &["score", wide.to_str().unwrap(), "--model-in", model.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("dimension"), "{}", stderr(&out));
}

#[test]
fn fit_devnet_without_labels_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_blob(dir.path(), 2, "plain.csv", true);
    let model = dir.path().join("devnet.json");
    let out = od(
        &["fit", "devnet", csv.to_str().unwrap(), "--model-out", model.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("labels required"), "{}", stderr(&out));
}

#[test]
fn fit_rejects_unknown_algorithm_listing_valid_ids() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_blob(dir.path(), 0, "blob.csv", false);
    let out = od(
        &["fit", "super_detector", csv.to_str().unwrap(), "--model-out", "m.json"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 1);
    let message = stderr(&out);
    for id in ["ae", "iforest", "knn", "lunar", "vae"] {
        assert!(message.contains(id), "missing {id} in {message}");
    }
}

#[test]
fn bench_reports_are_deterministic_and_rank_sums_hold() {
    let dir = tempfile::tempdir().unwrap();
    let bench_dir = dir.path().join("data");
    std::fs::create_dir(&bench_dir).unwrap();
    synth_blob(&bench_dir, 0, "blob.csv", false);

    let report_a = dir.path().join("a.json");
    let report_b = dir.path().join("b.json");
    for report in [&report_a, &report_b] {
        let out = od(
            &[
                "bench",
                bench_dir.to_str().unwrap(),
                "--pool",
                "knn,iforest",
                "--report",
                report.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
        assert!(stdout(&out).contains("mean ranks"));
    }
    let a = std::fs::read(&report_a).unwrap();
    let b = std::fs::read(&report_b).unwrap();
    assert_eq!(a, b, "same seeds must produce byte-identical reports");

    let value: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let ranks = value["ranks"]["ranks"].as_array().unwrap();
    let methods = value["ranks"]["methods"].as_array().unwrap();
    let k = methods.len() as f64;
    for row in ranks {
        let sum: f64 = row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        assert!((sum - k * (k + 1.0) / 2.0).abs() < 1e-9, "rank row sums to {sum}");
    }
    assert!(report_a.with_extension("txt").exists(), "text table written");
}

#[test]
fn bench_rejects_unknown_pool_ids() {
    let dir = tempfile::tempdir().unwrap();
    let bench_dir = dir.path().join("data");
    std::fs::create_dir(&bench_dir).unwrap();
    synth_blob(&bench_dir, 0, "blob.csv", false);
    let out = od(
        &["bench", bench_dir.to_str().unwrap(), "--pool", "knn,unknown_id"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("valid ids"), "{}", stderr(&out));
}

#[test]
fn bench_rejects_unlabeled_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let bench_dir = dir.path().join("data");
    std::fs::create_dir(&bench_dir).unwrap();
    synth_blob(&bench_dir, 0, "plain.csv", true);
    let out = od(&["bench", bench_dir.to_str().unwrap(), "--pool", "knn"], dir.path());
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("label column"), "{}", stderr(&out));
}

#[test]
fn registry_lists_every_detector() {
    let dir = tempfile::tempdir().unwrap();
    let out = od(&["registry"], dir.path());
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    for id in ["ae", "ae1svm", "deepsvdd", "devnet", "iforest", "knn", "lof", "lunar", "vae"] {
        assert!(text.contains(id), "missing {id}");
    }

    let out = od(&["registry", "--json"], dir.path());
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(value["version"], 1);
    assert_eq!(value["models"].as_array().unwrap().len(), 9);
}

#[test]
fn synth_rejects_unknown_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = od(&["synth", "mystery", "--out", "x.csv"], dir.path());
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("blob"), "{}", stderr(&out));
}
