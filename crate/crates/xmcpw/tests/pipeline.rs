//! End-to-end tests of the command-line binary: pipeline composability,
//! determinism and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use xmcpw::data::{write_xmc, SparseDataset, SparseExample};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xmcpw"))
}

fn run_ok(args: &[&str]) -> Output {
    let output = bin().args(args).output().expect("spawn xmcpw");
    assert!(
        output.status.success(),
        "xmcpw {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn write_dataset(path: &Path, dataset: &SparseDataset<f64>) {
    let mut buf = Vec::new();
    write_xmc(dataset, &mut buf).unwrap();
    fs::write(path, buf).unwrap();
}

/// A trivially separable multi-label dataset: feature `l` lights up
/// exactly when label `l` applies, with a few repetitions and noise-free
/// structure so a linear model fits it perfectly.
fn separable_dataset(copies: usize, num_labels: usize) -> SparseDataset<f64> {
    let mut examples = Vec::new();
    for copy in 0..copies {
        for label in 0..num_labels as u32 {
            let scale = 0.5 + 0.1 * (copy % 3) as f64;
            examples.push(SparseExample {
                labels: vec![label],
                features: vec![(label, scale)],
            });
        }
    }
    SparseDataset::new(num_labels, num_labels, examples).unwrap()
}

#[test]
fn train_predict_evaluate_compose() {
    let work = tempfile::tempdir().unwrap();
    let train_path = work.path().join("train.txt");
    let test_path = work.path().join("test.txt");
    let model_path = work.path().join("model.txt");
    let pred_path = work.path().join("pred.txt");

    write_dataset(&train_path, &separable_dataset(6, 4));
    write_dataset(&test_path, &separable_dataset(2, 4));

    run_ok(&[
        "train",
        "--data",
        train_path.to_str().unwrap(),
        "--model-out",
        model_path.to_str().unwrap(),
        "--prune",
        "0",
    ]);
    run_ok(&[
        "predict",
        "--data",
        test_path.to_str().unwrap(),
        "--model",
        model_path.to_str().unwrap(),
        "--k",
        "2",
        "--out",
        pred_path.to_str().unwrap(),
    ]);
    // The predict output feeds evaluate without transformation.
    let output = run_ok(&[
        "evaluate",
        "--truth",
        test_path.to_str().unwrap(),
        "--topk",
        pred_path.to_str().unwrap(),
        "--freq-from",
        train_path.to_str().unwrap(),
        "--k-list",
        "1,2",
    ]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("p@1=1.000000"), "{stdout}");
    assert!(stdout.contains("psp-norm@1=100.000000"), "{stdout}");
}

#[test]
fn self_evaluation_with_unit_propensities_reports_maxima() {
    let work = tempfile::tempdir().unwrap();
    let truth_path = work.path().join("truth.txt");
    let pred_path = work.path().join("pred.txt");

    let dataset = separable_dataset(2, 3);
    write_dataset(&truth_path, &dataset);
    // Truth as predictions: each example's labels, score 1.
    let mut lines = String::new();
    for example in dataset.examples() {
        let tokens: Vec<String> =
            example.labels.iter().map(|label| format!("{label}:1")).collect();
        lines.push_str(&tokens.join(" "));
        lines.push('\n');
    }
    fs::write(&pred_path, lines).unwrap();

    // No --freq-from: unit propensities, PS metrics equal vanilla ones.
    let output = run_ok(&[
        "evaluate",
        "--truth",
        truth_path.to_str().unwrap(),
        "--topk",
        pred_path.to_str().unwrap(),
        "--k-list",
        "1",
    ]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("p@1=1.000000"), "{stdout}");
    assert!(stdout.contains("ndcg@1=1.000000"), "{stdout}");
    assert!(stdout.contains("psp@1=1.000000"), "{stdout}");
    assert!(stdout.contains("psndcg@1=1.000000"), "{stdout}");
    assert!(stdout.contains("psp-norm@1=100.000000"), "{stdout}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let work = tempfile::tempdir().unwrap();
    let train_path = work.path().join("train.txt");
    write_dataset(&train_path, &separable_dataset(5, 3));

    let mut models = Vec::new();
    for name in ["a.txt", "b.txt"] {
        let model_path = work.path().join(name);
        run_ok(&[
            "train",
            "--data",
            train_path.to_str().unwrap(),
            "--model-out",
            model_path.to_str().unwrap(),
            "--threads",
            if name == "a.txt" { "1" } else { "4" },
        ]);
        models.push(fs::read(model_path).unwrap());
    }
    assert_eq!(models[0], models[1]);

    let model_path = work.path().join("a.txt");
    let mut predictions = Vec::new();
    for name in ["p1.txt", "p2.txt"] {
        let pred_path = work.path().join(name);
        run_ok(&[
            "predict",
            "--data",
            train_path.to_str().unwrap(),
            "--model",
            model_path.to_str().unwrap(),
            "--k",
            "3",
            "--out",
            pred_path.to_str().unwrap(),
        ]);
        predictions.push(fs::read(pred_path).unwrap());
    }
    assert_eq!(predictions[0], predictions[1]);

    let sim_a = run_ok(&["simulate", "--points", "60", "--features", "8", "--labels", "3"]);
    let sim_b = run_ok(&["simulate", "--points", "60", "--features", "8", "--labels", "3"]);
    assert_eq!(sim_a.stdout, sim_b.stdout);
}

#[test]
fn stats_recovers_a_unit_power_law_exponent() {
    // Label l occurs in the first lcm(1..=8) / (l + 1) examples, so the
    // frequency-ranked counts follow n_(r) = 840 / r exactly.
    let total = 840usize;
    let num_labels = 8usize;
    let examples: Vec<SparseExample<f64>> = (0..total)
        .map(|i| {
            let labels: Vec<u32> = (0..num_labels as u32)
                .filter(|&label| i < total / (label as usize + 1))
                .collect();
            SparseExample { labels, features: vec![(0, 1.0)] }
        })
        .collect();
    let dataset = SparseDataset::new(1, num_labels, examples).unwrap();

    let work = tempfile::tempdir().unwrap();
    let data_path = work.path().join("powerlaw.txt");
    write_dataset(&data_path, &dataset);
    let output = run_ok(&["stats", "--data", data_path.to_str().unwrap()]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    let beta: f64 = stdout
        .lines()
        .find(|line| line.starts_with("power law fit:"))
        .and_then(|line| line.split("beta=").nth(1))
        .and_then(|rest| rest.split_whitespace().next())
        .expect("beta in stats output")
        .parse()
        .unwrap();
    assert!((beta - 1.0).abs() < 1e-6, "beta {beta}\n{stdout}");
}

#[test]
fn simulate_emits_two_rows_per_grid_point() {
    let output = run_ok(&[
        "simulate",
        "--points",
        "60",
        "--features",
        "8",
        "--labels",
        "3",
        "--grid",
        "1.0,0.5",
        "--seed",
        "9",
    ]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows.len(), 4, "{stdout}");
    assert!(rows[0].starts_with("p=1.000, variant=plain, loss="));
    assert!(rows[1].starts_with("p=1.000, variant=weighted, loss="));
}

#[test]
fn propensities_prints_one_value_per_label() {
    let work = tempfile::tempdir().unwrap();
    let data_path = work.path().join("data.txt");
    write_dataset(&data_path, &separable_dataset(4, 5));
    let output = run_ok(&["propensities", "--data", data_path.to_str().unwrap()]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    let values: Vec<f64> = stdout.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 5);
    assert!(values.iter().all(|&p| p > 0.0 && p < 1.0));
    // Equal frequencies give equal propensities.
    assert!(values.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-15));
}

#[test]
fn exit_codes_distinguish_usage_and_data_errors() {
    // Unknown flag: usage error.
    let status = bin().args(["train", "--bogus"]).status().unwrap();
    assert_eq!(status.code(), Some(1));
    // Missing file: data error.
    let status = bin()
        .args(["stats", "--data", "/nonexistent/nowhere.txt"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    // Malformed data: data error with a message on stderr.
    let work = tempfile::tempdir().unwrap();
    let bad = work.path().join("bad.txt");
    fs::write(&bad, "2 4 3\n0 7:1.0\n1 0:1.0\n").unwrap();
    let output = bin()
        .args(["stats", "--data", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("line 2"), "{stderr}");
    // k = 0 passes flag parsing but is rejected by the metrics layer.
    let truth = work.path().join("truth.txt");
    let pred = work.path().join("pred.txt");
    fs::write(&truth, "1 2 2\n0 0:1.0\n").unwrap();
    fs::write(&pred, "0:1.0\n").unwrap();
    let status = bin()
        .args([
            "evaluate",
            "--truth",
            truth.to_str().unwrap(),
            "--topk",
            pred.to_str().unwrap(),
            "--k-list",
            "0",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
