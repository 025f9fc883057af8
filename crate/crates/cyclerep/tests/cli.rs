//! End-to-end command-line behavior: artifact chains, exit codes,
//! determinism of emitted files.

use std::path::Path;
use std::process::{Command, Output};

fn cyclerep(dir: &Path, args: &[&str]) -> Output {
    let tiny = [
        "--set",
        "seeds=[5]",
        "--set",
        "dataset.train_sequences=4",
        "--set",
        "dataset.test_sequences=4",
        "--set",
        "dataset.generator.num_frames=240",
        "--set",
        "train.clip_length=60",
        "--set",
        "train.epochs_max=1",
        "--set",
        "dataset.anomalous_fraction=0.3",
    ];
    Command::new(env!("CARGO_BIN_EXE_cyclerep"))
        .arg("--output-dir")
        .arg(dir)
        .args(tiny)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn dir_digest(dir: &Path) -> Vec<(String, u64)> {
    let mut entries = Vec::new();
    for entry in walk(dir) {
        let rel = entry
            .strip_prefix(dir)
            .unwrap()
            .to_string_lossy()
            .into_owned();
        let bytes = std::fs::read(&entry).unwrap();
        // cheap content fingerprint
        let mut h: u64 = 1469598103934665603;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(1099511628211);
        }
        entries.push((rel, h));
    }
    entries.sort();
    entries
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    if let Ok(rd) = std::fs::read_dir(dir) {
        for entry in rd.flatten() {
            let p = entry.path();
            if p.is_dir() {
                files.extend(walk(&p));
            } else {
                files.push(p);
            }
        }
    }
    files
}

#[test]
fn gen_is_idempotent_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let out = cyclerep(dir.path(), &["gen"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = dir_digest(dir.path());
    assert!(!first.is_empty());
    let out = cyclerep(dir.path(), &["gen"]);
    assert!(out.status.success());
    assert_eq!(first, dir_digest(dir.path()));
}

#[test]
fn invalid_config_exits_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = cyclerep(dir.path(), &["--set", "dataset.generator.period=1", "gen"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("period"), "stderr: {err}");
}

#[test]
fn missing_artifacts_exit_two_and_name_the_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    let out = cyclerep(dir.path(), &["train"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cyclerep gen"), "stderr: {err}");

    let out = cyclerep(dir.path(), &["gen"]);
    assert!(out.status.success());
    let out = cyclerep(dir.path(), &["embed"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cyclerep train"), "stderr: {err}");

    let out = cyclerep(dir.path(), &["train"]);
    assert!(out.status.success());
    let out = cyclerep(dir.path(), &["eval"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cyclerep embed"), "stderr: {err}");
}

#[test]
fn full_chain_emits_all_reports() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["gen", "train", "embed", "eval", "anomaly", "diag"] {
        let out = cyclerep(dir.path(), &[cmd]);
        assert!(
            out.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let seed = dir.path().join("seed_5");
    for artifact in [
        "data/train/manifest.json",
        "data/test/manifest.json",
        "checkpoint.json",
        "train_log.csv",
        "embeddings/embeddings.json",
        "eval/metrics.json",
        "eval/run_manifest.json",
        "anomaly/metrics.json",
        "anomaly/scores.csv",
    ] {
        assert!(seed.join(artifact).exists(), "missing {artifact}");
    }
    // metrics.json carries the required keys
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(seed.join("eval/metrics.json")).unwrap())
            .unwrap();
    for key in ["ap", "f1", "oracle_f1", "k", "eps", "per_video"] {
        assert!(metrics.get(key).is_some(), "metrics.json missing {key}");
    }
    // diag traces for one normal and one anomalous video
    let diag_files: Vec<String> = std::fs::read_dir(seed.join("diag"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(diag_files.iter().any(|f| f.starts_with("tsm_")));
    assert!(diag_files.iter().any(|f| f.starts_with("autocorr_")));
    assert!(diag_files.iter().any(|f| f.starts_with("pca_")));
    assert!(diag_files.iter().any(|f| f.starts_with("nn_distance_")));
}

#[test]
fn eval_baseline_sources_emit_separate_reports() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["gen", "train", "embed"] {
        assert!(cyclerep(dir.path(), &[cmd]).status.success());
    }
    for (source, file) in [
        ("frozen", "eval/metrics_frozen.json"),
        ("random", "eval/metrics_random.json"),
    ] {
        let out = cyclerep(dir.path(), &["eval", "--source", source]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join("seed_5").join(file).exists());
    }
    let out = cyclerep(dir.path(), &["eval", "--source", "bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ablate_continues_past_bad_cells() {
    let dir = tempfile::tempdir().unwrap();
    let out = cyclerep(
        dir.path(),
        &["ablate", "--axis", "l2norm", "--values", "true,bogus"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    let ok_rows = table.lines().filter(|l| l.ends_with(",ok")).count();
    assert_eq!(ok_rows, 1, "table:\n{table}");
    assert!(table.contains("bogus"), "bad cell recorded:\n{table}");
    assert!(dir.path().join("ablation_summary.csv").exists());
}

#[test]
fn metrics_are_byte_identical_across_reruns() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [dir_a.path(), dir_b.path()] {
        for cmd in ["gen", "train", "embed", "eval"] {
            assert!(cyclerep(dir, &[cmd]).status.success());
        }
    }
    let a = std::fs::read(dir_a.path().join("seed_5/eval/metrics.json")).unwrap();
    let b = std::fs::read(dir_b.path().join("seed_5/eval/metrics.json")).unwrap();
    assert_eq!(a, b);
}
