use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mlkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlkd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn mlkd")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A configuration small enough to train and evaluate in seconds.
fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    let cfg = r#"{
        "data": {
            "train": {"num_sequences": 4, "frames_per_sequence": 12},
            "eval": {"num_sequences": 3, "frames_per_sequence": 15, "name_prefix": "eval"}
        },
        "train": {"epochs": 1, "teacher_epochs": 1, "samples_per_epoch": 32, "batch_size": 16},
        "eval": {"timing_runs": 1}
    }"#;
    fs::write(&path, cfg).unwrap();
    path
}

fn files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn unknown_attribute_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = mlkd(&["eval", "--out", out.to_str().unwrap(), "--attributes", "fast-motion,glare"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("glare"), "{}", stderr(&o));
}

#[test]
fn unknown_config_field_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"train": {"epoch": 3}}"#).unwrap();
    let o = mlkd(&["gen-data", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
}

#[test]
fn bad_flag_is_a_usage_error() {
    let o = mlkd(&["train", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn distillation_without_teacher_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    let o = mlkd(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "students-mutual",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("teacher.ckpt"), "{}", stderr(&o));
}

#[test]
fn corrupt_checkpoint_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ckpt");
    let b = dir.path().join("b.ckpt");
    fs::write(&a, b"MLKD1 but not really").unwrap();
    fs::write(&b, b"garbage").unwrap();
    let out = dir.path().join("run");
    let o = mlkd(&["eval", "--out", out.to_str().unwrap(), a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("a.ckpt"), "{}", stderr(&o));
}

#[test]
fn gen_data_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = mlkd(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "3"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("4 training sequences"), "{}", stdout(&o));
    }
    let (fa, fb) = (files(&a.join("data")), files(&b.join("data")));
    assert!(!fa.is_empty());
    assert_eq!(fa, fb);
    assert!(a.join("config.json").is_file());
}

#[test]
fn teacher_then_mutual_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    let base = ["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];

    let o = mlkd(&[&["train", "--mode", "teacher"], &base[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("checkpoints/teacher.ckpt").is_file());

    let o = mlkd(&[&["train", "--mode", "students-mutual"], &base[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("election histogram"), "{}", stdout(&o));
    for k in ["mutual1_l2", "mutual2_spatial", "mutual3_response"] {
        assert!(out.join(format!("checkpoints/{k}.ckpt")).is_file(), "{k}");
    }
    let log = fs::read_to_string(out.join("checkpoints/train_students-mutual.ndjson")).unwrap();
    assert!(log.lines().next().unwrap().contains("elected_ids"));

    let o = mlkd(&[&["eval"], &base[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("MLKD-Track: mutual"), "{text}");
    assert!(out.join("eval/compare.csv").is_file());
    assert!(out.join("eval/report.json").is_file());

    let o = mlkd(&[&["eval", "--attributes", "fast-motion"], &base[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));

    // the three evaluation sequences carry the first three attributes only
    let o = mlkd(&[&["eval", "--attributes", "occlusion"], &base[..]].concat());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
