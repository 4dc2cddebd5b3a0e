//! The full file-based pipeline, driven through the same entry point as the
//! `kbc` binary: synth, build-dataset, featurize, train, predict, evaluate.
//!
//! cargo run --release --example file_pipeline -- [work_dir]

use kbc::commands::main_with_args;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "kbc-demo".to_string());
    let p = |name: &str| format!("{dir}/{name}");
    let steps: Vec<Vec<String>> = vec![
        vec!["synth", "--entities", "3000", "--types", "20", "--clusters", "40", "--seed", "4", "--out-dir", &p("corpus")],
        vec![
            "build-dataset",
            "--train-snapshot",
            &p("corpus/train_snapshot.tsv"),
            "--test-snapshot",
            &p("corpus/test_snapshot.tsv"),
            "--num-types",
            "20",
            "--out-dir",
            &p("dataset"),
        ],
        vec![
            "featurize",
            "--dataset-dir",
            &p("dataset"),
            "--description",
            &p("corpus/description.tsv"),
            "--wikipedia",
            &p("corpus/wikipedia.tsv"),
            "--out",
            &p("features.tsv"),
        ],
        vec!["train", "--dataset-dir", &p("dataset"), "--features", &p("features.tsv"), "--m", "1", "--n", "1", "--out", &p("model.tsv")],
        vec!["predict", "--model", &p("model.tsv"), "--features", &p("features.tsv"), "--dataset-dir", &p("dataset"), "--out", &p("predictions.tsv")],
        vec!["evaluate", "--predictions", &p("predictions.tsv"), "--test-set", &p("dataset/test_set.tsv"), "--out", &p("report.json")],
    ]
    .into_iter()
    .map(|s| s.into_iter().map(String::from).collect())
    .collect();
    for step in steps {
        println!("kbc {}", step.join(" "));
        let code = main_with_args(std::iter::once("kbc".to_string()).chain(step));
        if code != 0 {
            std::process::exit(code);
        }
    }
    print!("{}", std::fs::read_to_string(p("report.json")).expect("report written"));
}
