use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
data.n_train = 24
data.n_val = 12
data.n_test1 = 6
data.n_test2 = 6
experiment.seeds = [0]
train.epochs = 1
train.batch = 8
";

fn twr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twr")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.txt");
    fs::write(&path, TINY).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&twr(&[])), 1);
    assert_eq!(code(&twr(&["gen", "--bogus"])), 1);
    assert_eq!(code(&twr(&["gen", "--preset", "huge"])), 1);
    assert_eq!(code(&twr(&["train", "--variant", "tiny"])), 1);
    assert_eq!(code(&twr(&["--help"])), 0);
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.txt");
    fs::write(&cfg, "train.learning_rate = 0.1\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = twr(&["gen", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let good = tiny_config(dir.path());
    let out = twr(&["bound", "--config", &good, "--delta", "1.5", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out_dir = dir.path().join("empty");
    let out_dir = out_dir.to_str().unwrap();
    assert_eq!(code(&twr(&["train", "--variant", "full", "--config", &cfg, "--out", out_dir])), 2);
    assert_eq!(code(&twr(&["bound", "--config", &cfg, "--out", out_dir])), 2);
    assert_eq!(code(&twr(&["report", "--out", out_dir])), 2);
}

#[test]
fn full_workflow_on_a_tiny_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out_dir = dir.path().join("run");
    let o = out_dir.to_str().unwrap();

    let gen = twr(&["gen", "--config", &cfg, "--out", o]);
    assert_eq!(code(&gen), 0, "{}", String::from_utf8_lossy(&gen.stderr));
    assert!(out_dir.join("manifest.csv").exists());
    assert!(out_dir.join("maps.bin").exists());

    let train = twr(&["train", "--variant", "reduced", "--config", &cfg, "--seed", "4", "--out", o]);
    assert_eq!(code(&train), 0, "{}", String::from_utf8_lossy(&train.stderr));
    assert!(String::from_utf8_lossy(&train.stdout).contains("reduced seed 4"));

    let exp = twr(&["experiment", "--config", &cfg, "--out", o]);
    assert_eq!(code(&exp), 0, "{}", String::from_utf8_lossy(&exp.stderr));
    assert!(out_dir.join("geb_report.csv").exists());
    assert!(out_dir.join("gaps.csv").exists());

    let bound = twr(&["bound", "--config", &cfg, "--seed", "0", "--delta", "0.1", "--out", o]);
    assert_eq!(code(&bound), 0, "{}", String::from_utf8_lossy(&bound.stderr));
    let text = String::from_utf8_lossy(&bound.stdout);
    assert!(text.starts_with("seed,"));
    assert!(text.contains("GEB="));

    let report = twr(&["report", "--out", o]);
    assert_eq!(code(&report), 0, "{}", String::from_utf8_lossy(&report.stderr));
    assert!(!report.stdout.is_empty());
}
