//! End-to-end tests of the command-line binary: exit codes, printed
//! output, written artifacts, and byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_cafewidth")
}

/// Minimal fast config: 2-group dense chain (bins 4 x 5 under unit
/// granularity) on synthetic blobs, two epochs, two seeds.
fn base_config() -> serde_json::Value {
    serde_json::json!({
        "arch": {"kind": "dense-chain", "input": 4, "hidden": [4, 5], "classes": 3},
        "data": {"kind": "blobs", "classes": 3, "dims": 4, "samples": 150, "seed": 7},
        "budget": {"fraction": 0.6},
        "train": {
            "epochs": 2, "batch_size": 16,
            "lr": {"kind": "cosine", "lr0": 0.05, "lr_min": 0.001},
            "momentum": 0.9, "weight_decay": 0.0001, "offset": 1,
            "policy": "shared_combination", "warmup_fraction": 0.0,
            "seed": 0, "checkpoint_every": null
        },
        "evo": {"population": 6, "generations": 3, "mutation_prob": 0.2,
                 "crossover_prob": 0.9, "elite_fraction": 0.25, "seed": 0},
        "seeds": [0, 1]
    })
}

fn write_config(dir: &Path, value: &serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary must launch")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "expected exit {code}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

// ---------------------------------------------------------------------------
// Reproducibility
// ---------------------------------------------------------------------------

#[test]
fn reference_replays_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    for out in [&out1, &out2] {
        let o = run(&[
            "search",
            "evo",
            "--config",
            cfg.to_str().unwrap(),
            "--reference",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_exit(&o, 0);
    }
    let a = fs::read(out1.join("search-evo/result.json")).unwrap();
    let b = fs::read(out2.join("search-evo/result.json")).unwrap();
    assert_eq!(a, b, "reference replays must write identical result bytes");
    let a = fs::read(out1.join("search-evo/eval_log.csv")).unwrap();
    let b = fs::read(out2.join("search-evo/eval_log.csv")).unwrap();
    assert_eq!(a, b, "reference replays must write identical eval logs");
}

#[test]
fn threaded_run_matches_reference_except_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let reference = dir.path().join("ref");
    let threaded = dir.path().join("thr");
    let o = run(&[
        "search", "evo", "--config", cfg.to_str().unwrap(), "--reference", "--out",
        reference.to_str().unwrap(),
    ]);
    assert_exit(&o, 0);
    let o = run(&[
        "search", "evo", "--config", cfg.to_str().unwrap(), "--out", threaded.to_str().unwrap(),
    ]);
    assert_exit(&o, 0);

    let a = fs::read_to_string(reference.join("search-evo/result.json")).unwrap();
    let b = fs::read_to_string(threaded.join("search-evo/result.json")).unwrap();
    assert_ne!(a, b);
    let b_flagged = b.replace("\"reference\": false", "\"reference\": true");
    assert_eq!(a, b_flagged, "thread count must not change any numeric result");
}

// ---------------------------------------------------------------------------
// Printed search-space accounting
// ---------------------------------------------------------------------------

#[test]
fn analyze_space_prints_the_product_of_bin_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let o = run(&[
        "analyze-space", "--config", cfg.to_str().unwrap(), "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&o, 0);
    let text = stdout(&o);
    // Bins are 4 x 5 under unit granularity: 20 width vectors.
    assert!(text.contains("space size = 20"), "stdout was:\n{text}");
}

// ---------------------------------------------------------------------------
// Exit codes
// ---------------------------------------------------------------------------

#[test]
fn infeasible_budget_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["budget"] = serde_json::json!({"flops": 1});
    let path = write_config(dir.path(), &cfg);
    let o = run(&[
        "search", "evo", "--config", path.to_str().unwrap(), "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&o, 4);
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "infeasible_budget");
}

#[test]
fn invalid_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();

    // Fraction outside (0, 1].
    let mut cfg = base_config();
    cfg["budget"] = serde_json::json!({"fraction": 1.5});
    let path = write_config(dir.path(), &cfg);
    let o = run(&["plan-bins", "--config", path.to_str().unwrap()]);
    assert_exit(&o, 3);

    // Unknown field.
    let mut cfg = base_config();
    cfg["surprise"] = serde_json::json!(1);
    let path = write_config(dir.path(), &cfg);
    let o = run(&["plan-bins", "--config", path.to_str().unwrap()]);
    assert_exit(&o, 3);

    // Empty seed list.
    let mut cfg = base_config();
    cfg["seeds"] = serde_json::json!([]);
    let path = write_config(dir.path(), &cfg);
    let o = run(&["plan-bins", "--config", path.to_str().unwrap()]);
    assert_exit(&o, 3);

    // Missing --config entirely.
    let o = run(&["plan-bins"]);
    assert_exit(&o, 3);

    // Bad --policy value.
    let path = write_config(dir.path(), &base_config());
    let o = run(&["plan-bins", "--config", path.to_str().unwrap(), "--policy", "psychic"]);
    assert_exit(&o, 3);
}

#[test]
fn usage_errors_exit_2() {
    let o = run(&["transmogrify"]);
    assert_exit(&o, 2);
}

#[test]
fn malformed_dataset_file_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("data.csv"), "not,really\na,csv,with,labels\n").unwrap();
    let mut cfg = base_config();
    cfg["data"] = serde_json::json!({"kind": "csv", "path": "data.csv"});
    let path = write_config(dir.path(), &cfg);
    let o = run(&["plan-bins", "--config", path.to_str().unwrap()]);
    // plan-bins never touches the data; training does.
    assert_exit(&o, 0);
    let o = run(&[
        "train", "--config", path.to_str().unwrap(), "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&o, 5);
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "data_format");
}

#[test]
fn missing_dataset_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["data"] = serde_json::json!({"kind": "csv", "path": "nowhere.csv"});
    let path = write_config(dir.path(), &cfg);
    let o = run(&["plan-bins", "--config", path.to_str().unwrap()]);
    assert_exit(&o, 3);
}

// ---------------------------------------------------------------------------
// Artifact shape
// ---------------------------------------------------------------------------

#[test]
fn runs_write_result_manifest_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let out = dir.path().join("out");
    let o = run(&["plan-bins", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_exit(&o, 0);

    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("plan-bins/result.json")).unwrap()).unwrap();
    assert_eq!(result["schema"], "cafewidth-result/1");
    assert_eq!(result["command"], "plan-bins");
    let sha = result["config_sha256"].as_str().unwrap();
    assert_eq!(sha.len(), 64);
    assert!(sha.chars().all(|c| c.is_ascii_hexdigit()));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("plan-bins/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"], result["config_sha256"]);
    assert!(manifest["versions"]["cafewidth"].is_string());

    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("plan-bins/timing.json")).unwrap()).unwrap();
    assert!(timing["wall_seconds"].as_f64().unwrap() >= 0.0);

    assert!(out.join("plan-bins/bins.csv").exists());
}

#[test]
fn train_writes_checkpoint_log_and_losses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let out = dir.path().join("out");
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_exit(&o, 0);
    for seed in [0, 1] {
        let seed_dir = out.join(format!("train/seed{seed}"));
        assert!(seed_dir.join("final.ckpt").exists());
        assert!(seed_dir.join("train_log.jsonl").exists());
        assert!(seed_dir.join("loss.csv").exists());
    }
}

// ---------------------------------------------------------------------------
// Cross-command flow
// ---------------------------------------------------------------------------

#[test]
fn retrain_accepts_a_previous_search_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let out = dir.path().join("out");
    let o = run(&[
        "search", "random", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert_exit(&o, 0);
    let search: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("search-random/result.json")).unwrap())
            .unwrap();
    let searched_width = search["result"]["best"]["width"].clone();

    let o = run(&[
        "retrain", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--from-result",
        out.join("search-random/result.json").to_str().unwrap(),
    ]);
    assert_exit(&o, 0);
    let retrain: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("retrain/result.json")).unwrap()).unwrap();
    assert_eq!(retrain["result"]["best"]["width"], searched_width);

    // Retrain needs exactly one width source.
    let o = run(&["retrain", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_exit(&o, 3);
}

#[test]
fn seed_override_changes_the_run_but_stays_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    for (out, seed) in [(&out_a, "5"), (&out_b, "5"), (&out_c, "6")] {
        let o = run(&[
            "search", "evo", "--config", cfg.to_str().unwrap(), "--reference", "--seed", seed,
            "--out", out.to_str().unwrap(),
        ]);
        assert_exit(&o, 0);
    }
    let a = fs::read(out_a.join("search-evo/result.json")).unwrap();
    let b = fs::read(out_b.join("search-evo/result.json")).unwrap();
    let c = fs::read(out_c.join("search-evo/result.json")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);

    let parsed: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(parsed["seeds"], serde_json::json!([5]));
}
