use std::path::Path;
use std::process::{Command, Output};

fn sdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdlab")).args(args).output().unwrap()
}

const TINY: &str = r#"
[experiment]
name = "tiny"
seed = 5
roster = ["oracle", "dn", "nw", "hermite"]

[drift]
family = "mu3"

[data]
paths = 10
steps = 32
delta = 0.03125
heldout_paths = 4

[eval]
paths = 5
oos_horizon = 2.0
slice_points = 4

[train]
epochs = 2

[estimator]
k = 3

[baselines]
nw_bandwidths = [0.2, 0.5]
hermite_m = [1, 2]

[sweep]
taus = 5
ks = [1, 2]
per_axis = 4
steps = 10
"#;

fn tiny_config(dir: &Path) -> String {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn selftest_succeeds() {
    let out = sdlab(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 7);
    assert!(!text.contains("FAIL"));
}

#[test]
fn missing_config_is_a_validation_error() {
    let out = sdlab(&["simulate", "--config", "missing.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.cfg"));
}

#[test]
fn unknown_flag_prints_usage() {
    let out = sdlab(&["simulate", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(sdlab(&["--help"]).status.code(), Some(0));
    assert_eq!(sdlab(&["--threads", "0", "selftest"]).status.code(), Some(1));
}

#[test]
fn bad_config_values_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[experiment]\nroster = [\"ridge\"]\n[drift]\nfamily = \"mu4\"\ndim = 3\n").unwrap();
    let out = sdlab(&["simulate", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(&p, "[data]\nstepz = 3\n").unwrap();
    assert_eq!(sdlab(&["simulate", "--config", p.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn sweep_tau_writes_the_sweep_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out_dir = dir.path().join("sweep");
    let out = sdlab(&["sweep-tau", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next(), Some("tau,K,e2"));
    assert_eq!(lines.count(), 10);
}

#[test]
fn evaluate_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let mut summaries = Vec::new();
    for seed in ["1", "2"] {
        let out_dir = dir.path().join(format!("run{seed}"));
        let out = sdlab(&["evaluate", "--config", &cfg, "--seed", seed, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("best"));
        let summary = out_dir.join("summary.csv");
        let head = std::fs::read_to_string(&summary).unwrap();
        assert!(head.starts_with("# config_hash=") && head.lines().next().unwrap().ends_with(&format!("seed={seed}")));
        summaries.push(summary.to_string_lossy().into_owned());
    }
    let rep = dir.path().join("report");
    let out = sdlab(&[
        "report",
        &summaries[0],
        &summaries[1],
        "--relative-to",
        &summaries[0],
        "--out",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(rep.join("report.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("# ")).count(), 2);
    assert!(csv.contains("experiment,metric,Oracle,DN,NW,Hermite,note"));
    assert_eq!(csv.lines().filter(|l| l.contains('*')).count(), 4);
    let rel = std::fs::read_to_string(rep.join("relative_change.csv")).unwrap();
    assert!(rel.contains("experiment,estimator,rel_in,rel_oos"));
    // a report of a missing file is a validation error
    let out = sdlab(&["report", "nowhere.csv", "--out", rep.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    // a file where the output directory should go
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let out = sdlab(&["simulate", "--config", &cfg, "--out", blocker.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_and_estimate_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out_dir = dir.path().join("t");
    let o = out_dir.to_str().unwrap();
    assert_eq!(sdlab(&["simulate", "--config", &cfg, "--out", o]).status.code(), Some(0));
    assert_eq!(sdlab(&["train", "--config", &cfg, "--out", o]).status.code(), Some(0));
    assert_eq!(sdlab(&["estimate", "--config", &cfg, "--out", o]).status.code(), Some(0));
    for f in ["train.csv", "heldout.csv", "eval.csv", "train.sdds", "dn.sdest", "train_dn.csv", "estimates.csv", "slices.csv"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
}
