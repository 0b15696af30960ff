use std::path::Path;
use std::process::{Command, Output};

fn stagematch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stagematch")).args(args).output().expect("binary runs")
}

fn run_to(dir: &Path, seed: &str) -> Vec<u8> {
    let out = stagematch(&["run", "multi_vs_single", "--reps", "5", "--seed", seed, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let written = String::from_utf8(out.stdout).unwrap();
    let first = written.lines().next().expect("paths printed");
    std::fs::read(first).unwrap()
}

#[test]
fn list_names_every_experiment() {
    let out = stagematch(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["graduate_admissions", "three_agent", "adachi_search", "da_comparison", "multi_vs_single", "custom"] {
        assert!(text.contains(name), "missing {name} in\n{text}");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_to(&dir.path().join("a"), "7");
    let b = run_to(&dir.path().join("b"), "7");
    let c = run_to(&dir.path().join("c"), "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn unknown_experiment_fails_cleanly() {
    let out = stagematch(&["run", "no_such_experiment"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn config_for_another_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "experiment = \"three_agent\"\n").unwrap();
    let out = stagematch(&["run", "da_comparison", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
}
