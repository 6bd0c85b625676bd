use std::path::Path;
use std::process::{Command, Output};

fn mmimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmimo")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const SMALL_SWEEP: &str = "[rate-vs-n]\nantennas = [8, 16]\ndof = [\"N\", \"N/2\"]\nusers = 3\ntrials = 4\n";

#[test]
fn rate_sweep_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL_SWEEP);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let a_s = a.to_str().unwrap();
    let b_s = b.to_str().unwrap();
    assert_eq!(code(&mmimo(&["rate-vs-n", "--config", &cfg, "--out", a_s])), 0);
    assert_eq!(code(&mmimo(&["rate-vs-n", "--config", &cfg, "--out", b_s, "--threads", "1"])), 0);
    let first = std::fs::read_to_string(&a).unwrap();
    assert_eq!(first, std::fs::read_to_string(&b).unwrap());
    assert_eq!(first.lines().count(), 5);
    assert!(first.lines().next().unwrap().starts_with("experiment,cells,users,antennas,dof,"));
    assert!(dir.path().join("a.config.toml").exists());

    let again = mmimo(&["rate-vs-n", "--config", &cfg, "--out", a_s]);
    assert_eq!(code(&again), 0);
    assert_eq!(String::from_utf8_lossy(&again.stderr).matches("kept:").count(), 4);
    assert_eq!(std::fs::read_to_string(&a).unwrap(), first);

    let reseeded = mmimo(&["rate-vs-n", "--config", &cfg, "--out", a_s, "--seed", "5"]);
    assert_eq!(String::from_utf8_lossy(&reseeded.stderr).matches("done:").count(), 4);
    assert_ne!(std::fs::read_to_string(&a).unwrap(), first);
}

#[test]
fn zero_trials_writes_header_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dry.csv");
    let run = mmimo(&["rate-vs-n", "--trials", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("[rate-vs-n]") && stdout.contains("trials = 0"));
}

#[test]
fn dof_contour_keeps_infeasible_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[dof-contour]\nalphas = [0.3]\neffective-snr-db = [0.0, 20.0]\netas = [0.9]\n",
    );
    let out = dir.path().join("c.csv");
    assert_eq!(code(&mmimo(&["dof-contour", "--config", &cfg, "--out", out.to_str().unwrap()])), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains("infeasible"));
    assert!(lines[2].contains(",ok,"));
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let pass = write(dir.path(), "p.toml", "[validate]\nchecks = [\"fixed-point-scalar\", \"mf-dof-round-trip\"]\n");
    let run = mmimo(&["validate", "--config", &pass]);
    assert_eq!(code(&run), 0);
    let report = String::from_utf8_lossy(&run.stdout);
    assert!(report.starts_with("check,measured,tolerance,status,detail"));
    assert_eq!(report.matches(",pass,").count(), 2);

    let strict = write(
        dir.path(),
        "f.toml",
        "[validate]\nchecks = [\"derivative-finite-difference\"]\ntolerances = { derivative-finite-difference = 1e-15 }\n",
    );
    let out = dir.path().join("report.csv");
    let run = mmimo(&["validate", "--config", &strict, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("derivative-finite-difference"));
    assert!(std::fs::read_to_string(&out).unwrap().contains(",fail,"));

    let empty = write(dir.path(), "e.toml", "[validate]\nchecks = []\n");
    assert_eq!(code(&mmimo(&["validate", "--config", &empty])), 2);
    let typo = write(dir.path(), "t.toml", "[validate]\nchekcs = []\n");
    assert_eq!(code(&mmimo(&["validate", "--config", &typo])), 2);
    let bad = write(dir.path(), "b.toml", "[rate-vs-n]\nalpha = 2.0\n");
    assert_eq!(code(&mmimo(&["rate-vs-n", "--config", &bad, "--out", "/dev/null"])), 2);
}
