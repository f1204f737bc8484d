use std::fs;
use std::path::Path;
use std::process::Command;

use boussinesq::io::read_state_csv;
use boussinesq::Mesh;

const BIN: &str = env!("CARGO_BIN_EXE_boussinesq");

fn small_config(initial: &str, extra: &str) -> String {
    format!(
        r#"
[domain]
a = 0.0
b = 10.0
n_nodes = 41

[time]
T = 0.5
n_steps = 10

[physics]
alpha = 0.1
beta = 0.1

[coefficient]
kind = "gauss_sine"

[initial]
{initial}

[output]
directory = "run"
snapshot_stride = 5
{extra}
"#
    )
}

const GAUSSIAN: &str = r#"N = { kind = "gaussian", center = 5.0, width = 1.0, amplitude = 0.5 }
V = { kind = "gaussian", center = 5.0, width = 1.0, amplitude = 0.5 }"#;

const ZERO: &str = r#"N = { kind = "zero" }
V = { kind = "zero" }"#;

fn run(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("BOUSSINESQ_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn zero_data_gives_all_zero_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config(ZERO, ""));
    let out = run(dir.path(), &["forward", "-c", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mesh = Mesh::new(0.0, 10.0, 41).unwrap();
    let snaps: Vec<_> = fs::read_dir(dir.path().join("run/snapshots"))
        .unwrap()
        .collect();
    assert_eq!(snaps.len(), 3);
    for entry in snaps {
        let s = read_state_csv(&entry.unwrap().path(), &mesh).unwrap();
        assert!(s.elevation.iter().chain(&s.velocity).all(|v| *v == 0.0));
    }
    assert!(dir.path().join("run/energy.csv").is_file());
}

#[test]
fn forward_outputs_are_deterministic_and_listed_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config(GAUSSIAN, ""));
    for out_dir in ["a", "b"] {
        let out = run(dir.path(), &["forward", "-c", &cfg, "-o", out_dir]);
        assert!(out.status.success());
    }
    let read = |d: &str| fs::read(dir.path().join(d).join("final.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    let files: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    assert!(files.contains(&"final.csv") && files.contains(&"energy.csv"));
    assert_eq!(manifest["config"]["physics"]["beta"], 0.1);
    let header = fs::read_to_string(dir.path().join("a/final.csv")).unwrap();
    assert!(header.starts_with("xi,N,V\n"));
}

#[test]
fn invalid_config_exits_with_code_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &small_config(GAUSSIAN, "").replace("beta = 0.1", ""),
    );
    let out = run(dir.path(), &["forward", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn missing_observations_fail_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "[inverse]\nobserved = \"missing.csv\"\n";
    let cfg = write_config(dir.path(), &small_config(GAUSSIAN, extra));
    let out = run(dir.path(), &["inverse", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn twin_inverse_writes_four_iterates_per_field() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "[inverse]\ntwin = true\nsnapshot_iters = [1, 2, 3, 4]\n";
    let cfg = write_config(dir.path(), &small_config(GAUSSIAN, extra));
    let out = run(dir.path(), &["inverse", "-c", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let names: Vec<String> = fs::read_dir(dir.path().join("run/iterates"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("N_")).count(), 4);
    assert_eq!(names.iter().filter(|n| n.starts_with("V_")).count(), 4);
    let trace = fs::read_to_string(dir.path().join("run/trace.csv")).unwrap();
    let costs: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(costs.windows(2).all(|w| w[1] < w[0]));
    assert!(dir.path().join("run/recovered.csv").is_file());
}

#[test]
fn observed_file_round_trip_reproduces_the_twin() {
    let dir = tempfile::tempdir().unwrap();
    let twin = write_config(
        dir.path(),
        &small_config(GAUSSIAN, "[inverse]\ntwin = true\n"),
    );
    assert!(run(dir.path(), &["inverse", "-c", &twin, "-o", "twin"])
        .status
        .success());
    let extra = "[inverse]\nobserved = \"twin/observed.csv\"\n";
    let cfg = write_config(dir.path(), &small_config(GAUSSIAN, extra));
    assert!(run(dir.path(), &["inverse", "-c", &cfg, "-o", "file"])
        .status
        .success());
    let a = fs::read(dir.path().join("twin/recovered.csv")).unwrap();
    let b = fs::read(dir.path().join("file/recovered.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_reports_kernel_jump_and_horizon_warning() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_config(GAUSSIAN, "[oracle]\nlevels = 2\n")
        .replace("alpha = 0.1", "alpha = 0.0")
        .replace("T = 0.5", "T = 0.1")
        .replace("n_steps = 10", "n_steps = 4");
    let cfg = write_config(dir.path(), &text);
    let out = run(dir.path(), &["oracle", "-c", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let kernel: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("run/kernel.json")).unwrap()).unwrap();
    assert!(kernel["jump_relative_error"].as_f64().unwrap() <= 1e-9);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("run/manifest.json")).unwrap()).unwrap();
    let warnings = manifest["warnings"].as_array().unwrap();
    assert!(warnings
        .iter()
        .any(|w| w.as_str().unwrap().contains("contraction horizon")));
    let report = fs::read_to_string(dir.path().join("run/oracle.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
}

#[test]
fn output_root_variable_relocates_relative_directories() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    let cfg = write_config(dir.path(), &small_config(ZERO, ""));
    let out = Command::new(BIN)
        .args(["energy", "-c", &cfg])
        .current_dir(dir.path())
        .env("BOUSSINESQ_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.join("run/energy.csv").is_file());
    assert!(!dir.path().join("run").exists());
}

#[test]
fn existing_output_is_kept_unless_overwrite_is_given() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config(ZERO, ""));
    assert!(run(dir.path(), &["energy", "-c", &cfg]).status.success());
    assert_eq!(
        run(dir.path(), &["energy", "-c", &cfg]).status.code(),
        Some(2)
    );
    assert!(run(dir.path(), &["energy", "-c", &cfg, "--overwrite"])
        .status
        .success());
}
