//! End-to-end tests of the command-line binary: the curate -> split ->
//! train -> predict -> eval pipeline on a synthetic corpus, exit codes,
//! and determinism of the training logs.

use asap::corpus::{synthetic, write_csv, AspectTaxonomy, Polarity, Split};
use std::path::Path;
use std::process::{Command, Output};

fn asap_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_asap"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = asap_bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synthetic_csv(dir: &Path, name: &str, n: usize, seed: u64) -> std::path::PathBuf {
    let tax = AspectTaxonomy::default_restaurant();
    let ds = synthetic::generate(&tax, n, seed);
    let path = dir.join(name);
    write_csv(&ds, &path).unwrap();
    path
}

#[test]
fn validate_stats_split_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(dir.path(), "corpus.csv", 20, 1);

    let out = run_ok(&["validate", "--data", data.to_str().unwrap()]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("20 reviews"), "unexpected: {stdout}");

    let json_path = dir.path().join("stats.json");
    let out = run_ok(&[
        "stats",
        "--data",
        data.to_str().unwrap(),
        "--json",
        json_path.to_str().unwrap(),
    ]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("reviews"));
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(stats["review_count"], 20);

    let split_dir = dir.path().join("splits");
    run_ok(&[
        "split",
        "--data",
        data.to_str().unwrap(),
        "--out-dir",
        split_dir.to_str().unwrap(),
        "--seed",
        "7",
        "--ratios",
        "0.6,0.2,0.2",
    ]);
    for name in ["train.csv", "dev.csv", "test.csv"] {
        assert!(split_dir.join(name).exists(), "missing {name}");
    }
}

#[test]
fn seed_env_var_matches_flag() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(dir.path(), "corpus.csv", 15, 2);
    let via_flag = dir.path().join("flag");
    let via_env = dir.path().join("env");
    run_ok(&[
        "split",
        "--data",
        data.to_str().unwrap(),
        "--out-dir",
        via_flag.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    let out = asap_bin()
        .args(["split", "--data", data.to_str().unwrap(), "--out-dir"])
        .arg(&via_env)
        .env("ASAP_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    for name in ["train.csv", "dev.csv", "test.csv"] {
        assert_eq!(
            std::fs::read(via_flag.join(name)).unwrap(),
            std::fs::read(via_env.join(name)).unwrap(),
            "{name} differs between --seed and ASAP_SEED"
        );
    }
}

#[test]
fn exit_codes() {
    // usage error
    let out = asap_bin().args(["validate", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // help is not an error
    let out = asap_bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));

    // data error: malformed star rating
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    let tax = AspectTaxonomy::default_restaurant();
    let mut header = vec!["id".to_string(), "review".to_string(), "star".to_string()];
    header.extend(tax.names().iter().map(|n| n.to_string()));
    let mut row = vec!["r1".to_string(), "好".to_string(), "nine".to_string()];
    row.extend(std::iter::repeat_n("".to_string(), tax.len()));
    std::fs::write(&bad, format!("{}\n{}\n", header.join(","), row.join(","))).unwrap();
    let out = asap_bin().args(["validate", "--data", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // runtime error: unreadable input
    let out = asap_bin()
        .args(["validate", "--data", dir.path().join("missing.csv").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn curate_writes_report_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let tax = AspectTaxonomy::default_restaurant();
    let mut ds = synthetic::generate(&tax, 6, 3);
    // one review below any sane length threshold
    ds.reviews[0].text = "短".to_string();
    let data = dir.path().join("raw.csv");
    write_csv(&ds, &data).unwrap();

    let out_dir = dir.path().join("curated");
    let out = run_ok(&[
        "curate",
        "--data",
        data.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--min-chars",
        "5",
        "--max-chars",
        "1000",
    ]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("kept"));
    assert!(out_dir.join("curated.csv").exists());
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("curation_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["dropped_short"], 1);
    let resolved: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("resolved_config.json")).unwrap(),
    )
    .unwrap();
    // CLI flag overrides the built-in default
    assert_eq!(resolved["min_chinese_chars"], 5);
}

/// Train on a small synthetic corpus; returns the run directory.
fn train_into(dir: &Path, data: &Path, run: &str) -> std::path::PathBuf {
    let out_dir = dir.join(run);
    run_ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--dev",
        data.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--epochs",
        "2",
        "--batch-size",
        "4",
        "--d",
        "8",
        "--layers",
        "1",
        "--heads",
        "2",
        "--max-len",
        "64",
        "--seed",
        "5",
    ]);
    out_dir
}

#[test]
fn train_predict_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_csv(dir.path(), "train.csv", 12, 8);

    let run_a = train_into(dir.path(), &data, "run_a");
    let run_b = train_into(dir.path(), &data, "run_b");

    // deterministic: byte-identical logs, and identical checkpoints up to
    // the run-specific checkpoint_dir recorded in the config
    assert_eq!(
        std::fs::read(run_a.join("log.jsonl")).unwrap(),
        std::fs::read(run_b.join("log.jsonl")).unwrap(),
        "log.jsonl differs between identical runs"
    );
    let final_ckpt = run_a.join("checkpoints").join("epoch_2.json");
    assert!(final_ckpt.exists(), "missing final checkpoint");
    let load = |path: &Path| -> serde_json::Value {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("config");
        v
    };
    assert_eq!(
        load(&final_ckpt),
        load(&run_b.join("checkpoints").join("epoch_2.json")),
        "model state differs between identical runs"
    );

    // predict writes one JSONL record per review
    let preds = dir.path().join("preds.jsonl");
    run_ok(&[
        "predict",
        "--data",
        data.to_str().unwrap(),
        "--checkpoint",
        final_ckpt.to_str().unwrap(),
        "--out",
        preds.to_str().unwrap(),
    ]);
    let lines: Vec<String> = std::fs::read_to_string(&preds)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(lines.len(), 12);
    let first: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(first["probs"].as_array().unwrap().len(), 18);
    assert!(first["g_hat"].is_f64());

    // eval consumes predictions decoupled from the checkpoint
    let metrics = dir.path().join("metrics.json");
    let out = run_ok(&[
        "eval",
        "--preds",
        preds.to_str().unwrap(),
        "--gold",
        data.to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
    ]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("Macro-F1"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    assert!(report["acsa"]["macro_f1"].is_f64());
    assert!(report["rp"]["mae"].is_f64());

    // attention export
    let viz = dir.path().join("viz");
    let review_id = {
        let tax = AspectTaxonomy::default_restaurant();
        synthetic::generate(&tax, 12, 8).reviews[0].id.clone()
    };
    run_ok(&[
        "visualize-attention",
        "--data",
        data.to_str().unwrap(),
        "--checkpoint",
        final_ckpt.to_str().unwrap(),
        "--out-dir",
        viz.to_str().unwrap(),
        "--review-id",
        &review_id,
    ]);
    let jsonl = viz.join(format!("{review_id}.attention.jsonl"));
    let html = viz.join(format!("{review_id}.attention.html"));
    assert!(jsonl.exists() && html.exists());
    let trace: serde_json::Value = serde_json::from_str(
        std::fs::read_to_string(&jsonl).unwrap().lines().next().unwrap(),
    )
    .unwrap();
    let weights: Vec<f64> = trace["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let sum: f64 = weights.iter().sum();
    assert!((sum - 1.0).abs() < 1e-6, "exported attention sums to {sum}");

    // unreliable-review detection emits one record per review
    let flagged = dir.path().join("unreliable.jsonl");
    run_ok(&[
        "detect-unreliable",
        "--data",
        data.to_str().unwrap(),
        "--checkpoint",
        final_ckpt.to_str().unwrap(),
        "--threshold",
        "2.0",
        "--out",
        flagged.to_str().unwrap(),
    ]);
    let lines: Vec<String> = std::fs::read_to_string(&flagged)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(lines.len(), 12);
    let rec: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    assert!(rec["flagged"].is_boolean());
    assert!(rec["margin"].as_f64().unwrap() >= 0.0);
}

#[test]
fn eval_reproduces_hand_worked_example() {
    // Gold pairs (Neg, Neu, Pos, Pos) with predictions (Neg, Neu, Pos,
    // Neg): accuracy 0.75, Macro-F1 7/9.
    let dir = tempfile::tempdir().unwrap();
    let tax = AspectTaxonomy::default_restaurant();
    let mut ds = synthetic::generate(&tax, 2, 4);
    let a0 = 0usize;
    let a1 = 1usize;
    for r in &mut ds.reviews {
        r.labels = vec![None; tax.len()];
    }
    ds.reviews[0].labels[a0] = Some(Polarity::Negative);
    ds.reviews[0].labels[a1] = Some(Polarity::Neutral);
    ds.reviews[1].labels[a0] = Some(Polarity::Positive);
    ds.reviews[1].labels[a1] = Some(Polarity::Positive);
    ds.reviews[0].rating = 3;
    ds.reviews[1].rating = 5;
    ds.split = Split::Unsplit;
    let gold = dir.path().join("gold.csv");
    write_csv(&ds, &gold).unwrap();

    let one_hot = |class: usize| -> Vec<[f64; 3]> {
        (0..tax.len())
            .map(|_| {
                let mut row = [0.05; 3];
                row[class] = 0.9;
                row
            })
            .collect()
    };
    // per-review per-aspect predicted classes: review 0 -> (Neg, Neu),
    // review 1 -> (Pos at aspect 0, Neg at aspect 1)
    let mut probs0 = one_hot(0);
    probs0[a1] = {
        let mut row = [0.05; 3];
        row[1] = 0.9;
        row
    };
    let mut probs1 = one_hot(0);
    probs1[a0] = {
        let mut row = [0.05; 3];
        row[2] = 0.9;
        row
    };
    let preds = dir.path().join("preds.jsonl");
    let lines = [
        serde_json::json!({"id": ds.reviews[0].id, "probs": probs0, "g_hat": 3.5}),
        serde_json::json!({"id": ds.reviews[1].id, "probs": probs1, "g_hat": 4.5}),
    ];
    std::fs::write(
        &preds,
        lines.map(|l| l.to_string()).join("\n") + "\n",
    )
    .unwrap();

    let metrics = dir.path().join("metrics.json");
    run_ok(&[
        "eval",
        "--preds",
        preds.to_str().unwrap(),
        "--gold",
        gold.to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    assert!((report["acsa"]["accuracy"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert!((report["acsa"]["macro_f1"].as_f64().unwrap() - 7.0 / 9.0).abs() < 1e-12);
    let expected_mae = ((3.5f64 - 3.0).abs() + (4.5f64 - 5.0).abs()) / 2.0;
    assert!((report["rp"]["mae"].as_f64().unwrap() - expected_mae).abs() < 1e-12);
}
