//! End-to-end checks of the `kbc` binary on tiny hand-checkable inputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn kbc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbc"))
        .current_dir(dir)
        .env_remove("KBC_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = kbc(dir, args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    kbc(dir, args).status.code().expect("exit code")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

/// Train snapshot: a:t1, b:t1 b:t2, c:t3. Test snapshot adds a:t2 and a new
/// entity d:t1. With two types kept, t1 and t2 are selected.
fn tiny_workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("train.tsv"), "a\tt1\nb\tt1\nb\tt2\nc\tt3\n").unwrap();
    std::fs::write(p.join("test.tsv"), "a\tt1\na\tt2\nb\tt1\nb\tt2\nc\tt3\nd\tt1\n").unwrap();
    std::fs::write(p.join("desc.tsv"), "a\tred apple fruit\nb\tgreen apple\nc\tblue car\nd\tred car\n").unwrap();
    std::fs::write(p.join("wiki.tsv"), "").unwrap();
    ok(
        p,
        &[
            "build-dataset", "--train-snapshot", "train.tsv", "--test-snapshot", "test.tsv", "--num-types", "2", "--seed", "1",
            "--out-dir", "ds",
        ],
    );
    ok(p, &["featurize", "--dataset-dir", "ds", "--description", "desc.tsv", "--wikipedia", "wiki.tsv", "--min-df", "1", "--out", "feat.tsv"]);
    dir
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.is_empty()).map(|l| l.split('\t').map(str::to_string).collect()).collect()
}

#[test]
fn dataset_files_follow_the_construction_rules() {
    let dir = tiny_workspace();
    let p = dir.path();
    assert_eq!(read(p, "ds/types.txt"), "t1\nt2\n");
    assert_eq!(read(p, "ds/train_positives.tsv"), "a\tt1\nb\tt1\nb\tt2\n");
    let test = rows(&read(p, "ds/test_set.tsv"));
    let positives: Vec<_> = test.iter().filter(|r| r[2] == "1").map(|r| (r[0].as_str(), r[1].as_str())).collect();
    assert_eq!(positives, vec![("a", "t2"), ("d", "t1")]);
    // d has a new fact, so every other selected type is a negative for it
    assert!(test.iter().any(|r| r[0] == "d" && r[1] == "t2" && r[2] == "0"));
    // a's only other selected type is already known
    assert!(!test.iter().any(|r| r[0] == "a" && r[1] == "t1"));
    let stats = json(p, "ds/stats.json");
    assert_eq!(stats["num_positive_train"], 3);
    assert_eq!(stats["num_positive_test"], 2);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tiny_workspace();
    let p = dir.path();
    assert_eq!(code(p, &[]), 1);
    assert_eq!(code(p, &["train", "--no-such-flag"]), 1);
    assert_eq!(code(p, &["synth", "--missing-rate", "1.5", "--out-dir", "s"]), 1);
    assert_eq!(
        code(p, &["train", "--dataset-dir", "ds", "--features", "feat.tsv", "--algo", "linear.adagrad", "--C", "1", "--out", "m.txt"]),
        1
    );
    assert_eq!(code(p, &["train", "--dataset-dir", "ds", "--features", "feat.tsv", "--algo", "linear.dcd", "--epochs", "3", "--out", "m.txt"]), 1);
    assert_eq!(code(p, &["train", "--dataset-dir", "ds", "--features", "feat.tsv", "--algo", "linear.adagrad", "--dim", "4", "--out", "m.txt"]), 1);
    assert!(!p.join("m.txt").exists());
    assert_eq!(code(p, &["--help"]), 0);
}

#[test]
fn data_errors_exit_two() {
    let dir = tiny_workspace();
    let p = dir.path();
    assert_eq!(code(p, &["build-dataset", "--train-snapshot", "missing.tsv", "--test-snapshot", "test.tsv", "--out-dir", "x"]), 2);
    std::fs::write(p.join("bad.tsv"), "only-one-column\n").unwrap();
    assert_eq!(code(p, &["build-dataset", "--train-snapshot", "bad.tsv", "--test-snapshot", "test.tsv", "--out-dir", "x"]), 2);
}

#[test]
fn zero_epochs_give_a_zero_model_ranked_by_tie_break() {
    let dir = tiny_workspace();
    let p = dir.path();
    ok(p, &["train", "--dataset-dir", "ds", "--features", "feat.tsv", "--algo", "linear.adagrad", "--epochs", "0", "--seed", "1", "--out", "m.txt"]);
    let model = read(p, "m.txt");
    assert!(model.lines().any(|l| l == "t1\t") && model.lines().any(|l| l == "t2\t"), "{model}");

    ok(p, &["predict", "--model", "m.txt", "--features", "feat.tsv", "--dataset-dir", "ds", "--out", "p.tsv"]);
    let preds = rows(&read(p, "p.tsv"));
    assert!(preds.iter().all(|r| r[2] == "0"));
    // entities in first-seen order, then types in list order
    let order: Vec<(&str, &str)> = preds.iter().map(|r| (r[0].as_str(), r[1].as_str())).collect();
    let mut sorted = order.clone();
    let entity_rank = |e: &str| ["a", "b", "c", "d"].iter().position(|x| *x == e).unwrap();
    sorted.sort_by_key(|&(e, t)| (entity_rank(e), t.to_string()));
    assert_eq!(order, sorted);

    ok(p, &["evaluate", "--predictions", "p.tsv", "--test-set", "ds/test_set.tsv", "--metrics", "map,gap", "--out", "r.json"]);
    let test = rows(&read(p, "ds/test_set.tsv"));
    let labels: Vec<bool> = order
        .iter()
        .map(|&(e, t)| test.iter().find(|r| r[0] == e && r[1] == t).unwrap()[2] == "1")
        .collect();
    let mut hits = 0.0;
    let mut sum = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l {
            hits += 1.0;
            sum += hits / (i + 1) as f64;
        }
    }
    let expected = sum / hits;
    let gap = json(p, "r.json")["gap"].as_f64().unwrap();
    assert!((gap - expected).abs() < 1e-8, "{gap} vs {expected}");
}

const FEATURES_2D: &str = "#kbc-features v1\ntotal_dim\t2\nblock\tT\t0\t2\nblock\tD\t2\t0\nblock\tW\t2\t0\nx\t0:1 1:2\ny\t1:4\nz\t\n";

fn hand_model(row_a: &str, row_b: &str) -> String {
    format!(
        "#kbc-model v1\nalgorithm\tlinear.adagrad\nfeature_dim\t2\nnum_types\t2\nblock\tT\t0\t2\nblock\tD\t2\t0\nblock\tW\t2\t0\n\
         config\t{{\"loss_power\":1,\"c\":1.0,\"learning_rate\":0.1,\"adagrad_epsilon\":1e-8,\"epochs\":0,\
         \"negatives\":{{\"m\":1,\"n\":1,\"seed\":0}},\"resample_negatives\":true,\"dcd_tolerance\":1e-6,\"dcd_max_sweeps\":200,\"seed\":0}}\n\
         type\tA\ntype\tB\nA\t{row_a}\nB\t{row_b}\n"
    )
}

#[test]
fn hand_set_weights_score_by_dot_product() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("f.tsv"), FEATURES_2D).unwrap();
    std::fs::write(p.join("m.txt"), hand_model("0:0.5 1:0.25", "1:-1")).unwrap();
    std::fs::write(p.join("pairs.tsv"), "x\tA\nx\tB\ny\tA\ny\tB\nz\tA\n").unwrap();
    ok(p, &["predict", "--model", "m.txt", "--features", "f.tsv", "--pairs", "pairs.tsv", "--out", "p.tsv"]);
    // x·A = 0.5 + 0.5, y·A = 1, x·B = -2, y·B = -4, z scores 0
    assert_eq!(read(p, "p.tsv"), "x\tA\t1\ny\tA\t1\nz\tA\t0\nx\tB\t-2\ny\tB\t-4\n");

    ok(p, &["predict", "--model", "m.txt", "--features", "f.tsv", "--pairs", "pairs.tsv", "--top-k", "2", "--out", "top.tsv"]);
    assert_eq!(read(p, "top.tsv"), "x\tA\t1\ny\tA\t1\n");
    assert_eq!(code(p, &["predict", "--model", "m.txt", "--features", "f.tsv", "--pairs", "pairs.tsv", "--top-k", "0", "--out", "t0.tsv"]), 1);
}

#[test]
fn overflowing_scores_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("f.tsv"), FEATURES_2D).unwrap();
    std::fs::write(p.join("m.txt"), hand_model("0:1e308 1:1e308", "")).unwrap();
    std::fs::write(p.join("pairs.tsv"), "x\tA\n").unwrap();
    assert_eq!(code(p, &["predict", "--model", "m.txt", "--features", "f.tsv", "--pairs", "pairs.tsv", "--out", "p.tsv"]), 3);
}

#[test]
fn perfect_predictions_score_one_and_strangers_are_rejected() {
    let dir = tiny_workspace();
    let p = dir.path();
    let test = rows(&read(p, "ds/test_set.tsv"));
    let perfect: String = test.iter().map(|r| format!("{}\t{}\t{}\n", r[0], r[1], if r[2] == "1" { 5 } else { -5 })).collect();
    std::fs::write(p.join("perfect.tsv"), perfect).unwrap();
    ok(p, &["evaluate", "--predictions", "perfect.tsv", "--test-set", "ds/test_set.tsv", "--metrics", "map,gap,g@1", "--out", "r.json"]);
    let r = json(p, "r.json");
    assert_eq!(r["map"], 1.0);
    assert_eq!(r["gap"], 1.0);
    assert_eq!(r["g_at_k"]["1"], 1.0);

    std::fs::write(p.join("stranger.tsv"), "zz\tt1\t0.5\n").unwrap();
    let out = kbc(p, &["evaluate", "--predictions", "stranger.tsv", "--test-set", "ds/test_set.tsv", "--out", "s.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(zz, t1)"));
}

fn train_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["train", "--dataset-dir", "ds", "--features", "feat.tsv", "--algo", "linear.adagrad", "--out", out];
    v.extend_from_slice(extra);
    v
}

#[test]
fn training_is_reproducible_and_seed_sensitive() {
    let dir = tiny_workspace();
    let p = dir.path();
    ok(p, &train_args("m1.txt", &["--seed", "3", "--epochs", "20"]));
    ok(p, &train_args("m2.txt", &["--seed", "3", "--epochs", "20"]));
    ok(p, &train_args("m3.txt", &["--seed", "4", "--epochs", "20"]));
    assert_eq!(read(p, "m1.txt"), read(p, "m2.txt"));
    assert_ne!(read(p, "m1.txt"), read(p, "m3.txt"));
}

#[test]
fn seed_from_environment_and_config_file() {
    let dir = tiny_workspace();
    let p = dir.path();
    ok(p, &train_args("flag.txt", &["--seed", "7"]));

    let out = Command::new(env!("CARGO_BIN_EXE_kbc")).current_dir(p).env("KBC_SEED", "7").args(train_args("env.txt", &[])).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read(p, "flag.txt"), read(p, "env.txt"));

    std::fs::write(p.join("cfg.json"), r#"{"seed": 7, "epochs": 5}"#).unwrap();
    ok(p, &train_args("cfg.txt", &["--config", "cfg.json"]));
    assert_eq!(read(p, "flag.txt"), read(p, "cfg.txt"));

    // a command-line flag beats the config file
    ok(p, &train_args("override.txt", &["--config", "cfg.json", "--seed", "8"]));
    ok(p, &train_args("eight.txt", &["--seed", "8"]));
    assert_eq!(read(p, "override.txt"), read(p, "eight.txt"));
}

#[test]
fn manifests_record_digests_and_replay() {
    let dir = tiny_workspace();
    let p = dir.path();
    ok(p, &train_args("m.txt", &["--seed", "2"]));
    let manifest = json(p, "m.txt.manifest.json");
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 2);
    let digest = manifest["outputs"]["m.txt"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert!(manifest["inputs"].as_object().unwrap().contains_key("feat.tsv"));
    assert!(p.join("ds/build-dataset.manifest.json").is_file());

    ok(p, &["replay", "m.txt.manifest.json"]);

    // a manifest whose recorded digest no longer matches fails to replay
    let tampered = read(p, "m.txt.manifest.json").replace(digest, &"0".repeat(64));
    std::fs::write(p.join("tampered.json"), tampered).unwrap();
    assert_eq!(code(p, &["replay", "tampered.json"]), 2);
}

#[test]
fn synth_without_missing_facts_writes_equal_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--entities", "200", "--types", "5", "--clusters", "10", "--missing-rate", "0", "--seed", "1", "--out-dir", "s"]);
    assert_eq!(read(p, "s/train_snapshot.tsv"), read(p, "s/test_snapshot.tsv"));
    for f in ["description.tsv", "wikipedia.tsv", "synth.manifest.json"] {
        assert!(PathBuf::from(p).join("s").join(f).is_file(), "{f}");
    }
}
