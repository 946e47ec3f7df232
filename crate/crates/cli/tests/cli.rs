use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn raftfem(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raftfem"))
        .args(args)
        .current_dir(dir)
        .env_remove("RAFTFEM_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let text = format!(
        "scenario = \"small\"\n[geometry]\nkind = \"sphere\"\nlevel = 2\n[run]\nt_end = 1e-3\nstop_on_stationary = false\n\
         [output]\ndirectory = \"out\"\nsnapshot_times = [0.0, 5e-4]\n{extra}"
    );
    let path = dir.join("small.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn mesh_info_prints_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = raftfem(&["mesh-info", "sphere:2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("vertices   98"), "{text}");
    assert!(text.contains("triangles  192"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(raftfem(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(
        raftfem(&["mesh-info", "cube:3"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(raftfem(&["run"], dir.path()).status.code(), Some(1));
    assert_eq!(
        raftfem(&["run", "--preset", "unknown"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        raftfem(&["benchmark", "table"], dir.path()).status.code(),
        Some(1)
    );
}

#[test]
fn invalid_config_exits_one_with_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_config(dir.path(), "[model]\ndelta = -1.0\n");
    let out = raftfem(&["run", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("delta"));
    assert_eq!(
        raftfem(&["run", "missing.toml"], dir.path()).status.code(),
        Some(1)
    );
}

#[test]
fn run_writes_outputs_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_config(dir.path(), "");
    let out = raftfem(&["run", path.to_str().unwrap()], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("small") && stdout.contains("rafts"),
        "{stdout}"
    );
    let out_dir = dir.path().join("out");
    for f in [
        "diagnostics.csv",
        "snapshot_000.vtk",
        "snapshot_001.vtk",
        "final.vtk",
        "config.toml",
    ] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let first = fs::read(out_dir.join("diagnostics.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("step,t,tau,int_phi"));
    let columns = header.split(',').count();
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.split(',').count() == columns));
    let vtk = fs::read_to_string(out_dir.join("final.vtk")).unwrap();
    assert!(vtk.contains("SCALARS phi") && vtk.contains("SCALARS v") && vtk.contains("SCALARS mu"));

    let again = raftfem(&["run", path.to_str().unwrap()], dir.path());
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(fs::read(out_dir.join("diagnostics.csv")).unwrap(), first);
}

#[test]
fn output_dir_environment_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_config(dir.path(), "");
    let target = dir.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_raftfem"))
        .args(["run", path.to_str().unwrap()])
        .current_dir(dir.path())
        .env("RAFTFEM_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("diagnostics.csv").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn numerical_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_config(dir.path(), "[initial]\nphi_hat = 1e200\n");
    let out = raftfem(&["run", path.to_str().unwrap()], dir.path());
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn ode_benchmark_passes_without_exchange() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    fs::write(
        &cfg,
        "[model]\nc1 = 0.0\nc2 = 0.0\n[ode]\nlevel = 2\nt_end = 1e-3\n",
    )
    .unwrap();
    let out = raftfem(
        &[
            "benchmark",
            "ode",
            cfg.to_str().unwrap(),
            "--output-dir",
            "b",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = fs::read_to_string(dir.path().join("b/int_v.csv")).unwrap();
    assert!(table.starts_with("t,int_v_fem,int_v_ode"));
}

#[test]
fn violated_bracket_exits_three() {
    // A wide interface is resolved far better than the sharp benchmark
    // interface, so e_inf on 6146 vertices drops below the bracket.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    fs::write(
        &cfg,
        "[model]\neps = 0.1\n[convergence]\nlevels = [5]\n[convergence.stepper]\ntau_min = 1e-2\ntau_max = 1e-2\ntau_init = 1e-2\n",
    )
    .unwrap();
    let out = raftfem(
        &[
            "benchmark",
            "convergence",
            cfg.to_str().unwrap(),
            "--output-dir",
            "c",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(dir.path().join("c/convergence.csv").exists());
}
