use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_secondgrade"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn file_digests(dir: &Path) -> BTreeMap<String, String> {
    manifest(dir)["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["path"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
        .collect()
}

const SMALL: &str = r#"
[domain]
alpha = 1.0
mu = 1.0

[galerkin]
cutoff = 4

[time]
horizon = 0.5
dt = 0.05
mode_columns = true

[coefficients]
family = "additive"
forcing_amp = 0.5
sigma_amp = 0.3
jump_amps = [0.4]

[marks]
weights = [1.0]

[initial]
kind = "smooth"

[run]
seed = 11
paths = 2
samples = 100

[tolerances]
identity_cutoffs = [4, 8]
"#;

#[test]
fn decay_passes_and_manifest_digests_match_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("decay");
    let o = run(&["decay", "--out", out.to_str().unwrap(), "--set", "galerkin.cutoff=4", "--set", "time.horizon=2.0", "--set", "time.dt=0.01"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&out)["subcommand"], "decay");
    let files = file_digests(&out);
    assert_eq!(files.len(), 3);
    for name in ["config.toml", "report.json", "trajectory.csv"] {
        let bytes = std::fs::read(out.join(name)).unwrap();
        assert_eq!(files[name], hex::encode(Sha256::digest(&bytes)), "{name}");
    }
    assert!(!files.contains_key("manifest.json"));
}

#[test]
fn simulate_is_reproducible_and_leaves_config_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let before = std::fs::read(&cfg).unwrap();
    let mut digests = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        digests.push(file_digests(&out));
    }
    assert_eq!(digests[0], digests[1]);
    assert!(digests[0].contains_key("trajectory_0001.csv"));
    assert_eq!(std::fs::read(&cfg).unwrap(), before);
}

#[test]
fn seed_flag_changes_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(
        run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "12"]).status.code(),
        Some(0)
    );
    assert_ne!(file_digests(&a)["trajectory_0000.csv"], file_digests(&b)["trajectory_0000.csv"]);
    assert_eq!(manifest(&b)["seed"], 12);
}

#[test]
fn verify_passes_for_shipped_families() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    for family in ["additive", "affine-lowpass"] {
        let out = tmp.path().join(family);
        let set = format!("coefficients.family=\"{family}\"");
        let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--set", &set]);
        assert_eq!(o.status.code(), Some(0), "{family}: {}", String::from_utf8_lossy(&o.stderr));
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["status"], "pass");
    }
}

#[test]
fn failed_assertion_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["decay", "--out", out.to_str().unwrap(), "--set", "galerkin.cutoff=4", "--set", "time.dt=0.1", "--set", "time.scheme=\"euler\""]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["simulate", "--out", out.to_str().unwrap(), "--set", "time.dt=0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("time.dt"));
    assert!(!out.exists());

    let o = run(&["simulate", "--out", out.to_str().unwrap(), "--set", "time.nonsense=1"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["simulate", "--config", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[time]\ndt = = 1\n").unwrap();
    let o = run(&["simulate", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = run(&["decay", "--out", blocker.join("sub").to_str().unwrap(), "--set", "galerkin.cutoff=2"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
