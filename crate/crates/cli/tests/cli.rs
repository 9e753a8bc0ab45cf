use std::path::Path;
use std::process::{Command, Output};

fn vibfano(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vibfano"))
        .current_dir(dir)
        .args(args)
        .env_remove("VIBFANO_WORKERS")
        .output()
        .expect("binary runs")
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn minimal_config_file_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "[problem]\nhopping = 1.0\nhbar_omega = 0.01\n\n[sweep]\nmin = -1.9\nmax = 1.9\npoints = 400\n",
    )
    .unwrap();
    let out = vibfano(dir.path(), &["show-config", "-c", "run.toml"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# config_hash = "));
    assert!(text.contains("points = 400"));
}

#[test]
fn static_spectrum_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["spectrum", "--set", "problem.mobile=none", "--set", "sweep.points=50"];
    let out = vibfano(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read_to_string(dir.path().join("out/spectrum.csv")).unwrap();
    let json = std::fs::read_to_string(dir.path().join("out/spectrum.json")).unwrap();
    let lines = data_lines(&first);
    assert!(lines[0].starts_with("E,T_total,R_total,defect"));
    assert_eq!(lines.len(), 51);
    assert!(first.contains("# config_hash = "));
    assert!(first.contains("mobile = \"none\""));

    let again = vibfano(dir.path(), &args);
    assert!(again.status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("out/spectrum.csv")).unwrap(), first);
    assert_eq!(std::fs::read_to_string(dir.path().join("out/spectrum.json")).unwrap(), json);

    let summary: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(summary["summary"]["worst_defect"].as_f64().unwrap() < 1e-9);
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["spectrum", "--set", "problem.n_vib=8", "--set", "sweep.points=40"];
    let one = vibfano(dir.path(), &[&base[..], &["-j", "1", "--set", "output.directory=one"]].concat());
    let out = Command::new(env!("CARGO_BIN_EXE_vibfano"))
        .current_dir(dir.path())
        .args(base)
        .args(["--set", "output.directory=many"])
        .env("VIBFANO_WORKERS", "3")
        .output()
        .unwrap();
    assert!(one.status.success() && out.status.success());
    let a = std::fs::read_to_string(dir.path().join("one/spectrum.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("many/spectrum.csv")).unwrap();
    // Headers differ only in the output directory line.
    assert_eq!(data_lines(&a), data_lines(&b));
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for (set, needle) in [
        ("problem.n_vib=0", "n_vib"),
        ("problem.d=0.5", "CU intersects chain"),
        ("problem.nvib=3", "unknown field"),
    ] {
        let out = vibfano(dir.path(), &["spectrum", "--set", set]);
        assert_eq!(out.status.code(), Some(2), "{set}");
        let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
        assert!(record["message"].as_str().unwrap().contains(needle), "{record}");
    }
}

#[test]
fn oversized_time_step_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibfano(dir.path(), &["tdse", "--set", "tdse.dt=0.5", "--set", "problem.n_vib=4"]);
    assert_eq!(out.status.code(), Some(1));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"], "StepSizeTooLarge");
}

#[test]
fn crossval_exit_status_follows_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let common = [
        "crossval",
        "--set",
        "problem.mobile=none",
        "--set",
        "crossval.energies=[-0.5]",
        "--set",
        "tdse.dt=0.02",
    ];
    let pass = vibfano(dir.path(), &[&common[..], &["--set", "crossval.tolerance=0.01"]].concat());
    assert_eq!(pass.status.code(), Some(0), "{}", String::from_utf8_lossy(&pass.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/crossval.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["passed"], true);

    let fail = vibfano(dir.path(), &[&common[..], &["--set", "crossval.tolerance=1e-12"]].concat());
    assert_eq!(fail.status.code(), Some(2));

    let refused = vibfano(dir.path(), &[&common[..], &["--set", "crossval.expected_hash=\"abc\""]].concat());
    assert_eq!(refused.status.code(), Some(2));
}

#[test]
fn entropy_series_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibfano(
        dir.path(),
        &["entropy", "--set", "problem.n_vib=4", "--set", "tdse.t_end=20", "--set", "tdse.dt=0.02"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/entropy.csv")).unwrap();
    let lines = data_lines(&text);
    assert_eq!(lines[0], "t,norm,energy,P_U,S");
    assert!(lines.len() > 10);
}
