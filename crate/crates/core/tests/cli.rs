mod common;

use std::fs;
use std::process::{Command, Output};

fn csm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn csm")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn presets_lists_every_row() {
    let o = csm(&["presets"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["mnist-1hl", "mnist-3hl-adaptive", "mnist-str-r8-nps80-crop", "cifar-ep-fc-2hl", "mnist-desk"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn train_resume_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let data = common::mnist_dir();
    let (out_s, data_s) = (out.to_str().unwrap(), data.to_str().unwrap());
    let base = [
        "--preset", "mnist-desk", "--data-dir", data_s, "--subset-train", "100", "--subset-val", "50", "--out", out_s,
    ];
    let o = csm(&[&["train"][..], &base, &["--epochs", "1", "--set", "hidden=[16]"]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("| Learning Rate |"));

    let ck = out.join("checkpoint.bin");
    let o = csm(&["train", "--resume", ck.to_str().unwrap(), "--epochs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count(), 4);

    let o = csm(&["eval", "--checkpoint", ck.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("epoch 2 validation error"));
}

#[test]
fn bad_override_is_rejected() {
    let o = csm(&["train", "--preset", "mnist-desk", "--set", "no_such_key=1"]);
    assert!(!o.status.success());
    let o = csm(&["train", "--preset", "nope"]);
    assert!(!o.status.success());
}

#[test]
fn linear_demo_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let o = csm(&["linear-demo", "--steps", "20000", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("prediction correlation"));
    assert!(dir.path().join("curve.csv").is_file());
    assert!(dir.path().join("pairs.csv").is_file());
}
