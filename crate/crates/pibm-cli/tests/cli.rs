use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pibm"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pibm-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str], out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn help_succeeds() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("duality-check"));
}

#[test]
fn tracy_widom_grid_is_written() {
    let dir = scratch("tw");
    let out = run(&["fredholm", "--kernel", "tw", "--grid", "-2:0:1"], &dir);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.join("tracy_widom.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "s,cdf");
    assert_eq!(lines.len(), 4);
    let (s, f) = lines[1].split_once(',').unwrap();
    assert_eq!(s, "-2.0000000000000000e0");
    assert!((f.parse::<f64>().unwrap() - 0.413224).abs() < 1e-6);
    let m = manifest(&dir);
    assert_eq!(m["passed"], true);
    assert!((m["summary"]["mean"].as_f64().unwrap() + 1.7711).abs() < 1e-3);
}

#[test]
fn transition_checks_pass() {
    let dir = scratch("transition");
    let out = run(&["transition", "--n", "2", "--check", "permanent"], &dir);
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(&dir);
    assert_eq!(m["checks"].as_array().unwrap().len(), 1);
    assert!(m["checks"][0]["measured"].as_f64().unwrap() < 1e-8);
}

#[test]
fn duality_run_is_reproducible_from_its_config() {
    let first = scratch("dual-a");
    let out = run(
        &[
            "duality-check",
            "--x",
            "0.5,0.1",
            "--y",
            "0,0.3",
            "--paths",
            "500",
            "--dt",
            "0.01",
            "--seed",
            "7",
        ],
        &first,
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    // Re-run the saved configuration into a second directory.
    let mut cfg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.join("config.json")).unwrap()).unwrap();
    let second = scratch("dual-b");
    cfg["out"] = serde_json::Value::String(second.to_string_lossy().into_owned());
    let cfg_path = scratch("dual-config.json");
    fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let again = bin()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(
        fs::read(first.join("duality.csv")).unwrap(),
        fs::read(second.join("duality.csv")).unwrap()
    );
}

#[test]
fn failed_check_exits_with_two() {
    let dir = scratch("strict");
    let out = run(
        &[
            "duality-check",
            "--x",
            "0.5",
            "--y",
            "0",
            "--paths",
            "200",
            "--dt",
            "0.01",
            "--tol",
            "0",
        ],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(manifest(&dir)["passed"], false);
}

#[test]
fn error_classes_map_to_exit_codes() {
    let dir = scratch("errors");
    // Malformed grid.
    assert_eq!(
        run(&["fredholm", "--grid", "1:0:1"], &dir).status.code(),
        Some(3)
    );
    // The duality function needs tau < 1.
    assert_eq!(
        run(
            &["duality-check", "--x", "1", "--y", "0", "--tau", "2"],
            &dir
        )
        .status
        .code(),
        Some(3)
    );
    // Vanishing curvature of the pressure.
    assert_eq!(
        run(&["constants", "--profile", "gaussian-chain"], &dir)
            .status
            .code(),
        Some(4)
    );
    let bad_workers = bin()
        .env("PIBM_WORKERS", "many")
        .args(["constants"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(bad_workers.status.code(), Some(3));
}

#[test]
fn constants_table() {
    let dir = scratch("constants");
    let out = run(
        &[
            "constants",
            "--profile",
            "point",
            "--slope",
            "1",
            "--tau",
            "0.5",
        ],
        &dir,
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.join("constants.csv")).unwrap();
    assert!(csv.contains("A,1.0000000000000000e0"));
    // lambda = gamma P''(1) = 2 gamma with gamma = 1/3 at tau = 1/2.
    let lambda: f64 = csv
        .lines()
        .find(|l| l.starts_with("lambda,"))
        .unwrap()
        .split_once(',')
        .unwrap()
        .1
        .parse()
        .unwrap();
    assert!((lambda - 2.0 / 3.0).abs() < 1e-15);
}
