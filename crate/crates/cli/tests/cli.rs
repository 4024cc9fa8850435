use std::path::Path;
use std::process::{Command, Output};

fn attitrack(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attitrack"))
        .args(args)
        .env("ATTITRACK_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_trajectory_switches_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = attitrack(&["run", "--scenario", "2", "--set", "duration=5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["scenario2.csv", "scenario2_switches.csv", "scenario2_metrics.json"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let switches = std::fs::read_to_string(dir.path().join("scenario2_switches.csv")).unwrap();
    assert_eq!(switches.lines().count(), 2);
}

#[test]
fn out_flag_beats_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = attitrack(
        &["run", "--scenario", "1", "--set", "duration=1", "--out", flag_dir.path().to_str().unwrap()],
        env_dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(flag_dir.path().join("scenario1.csv").exists());
    assert!(!env_dir.path().join("scenario1.csv").exists());
}

#[test]
fn certify_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = attitrack(&["certify", "--scenario", "2", "--set", "duration=10"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("certification PASSED"));
    let csv = std::fs::read_to_string(dir.path().join("scenario2_certificates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1002);
    assert!(dir.path().join("scenario2_certification.json").exists());
}

#[test]
fn singularity_aborts_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let o = attitrack(&["run", "--scenario", "1", "--set", "plant.q0=[-1.0, 0.0, 0.0, 0.0]"], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("step 0"), "{err}");
}

#[test]
fn sweep_emits_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = attitrack(
        &["sweep", "--scenario", "1", "--set", "duration=2", "--key", "gains.gamma", "--values", "0.5,1,2"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(dir.path().join("scenario1_sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("key,value,switch_count"));
    assert!(lines[1].starts_with("gains.gamma,0.5,"));
    assert!(lines[3].starts_with("gains.gamma,2,"));
}

#[test]
fn config_file_is_accepted_and_unknown_keys_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_attitrack")).args(["--help"]).output().unwrap();
    assert!(o.status.success());

    let exported = dir.path().join("s.toml");
    let text = r#"
name = "from_file"
duration = 1.0

[plant]
inertia = [2.0, 3.0, 4.0]
q0 = [1.0, 0.0, 0.0, 0.0]
omega0 = [0.1, 0.0, 0.0]

[reference]
qd0 = [1.0, 0.0, 0.0, 0.0]
omega_d = [0.0, 0.1, 0.0]

[sensor]
bias0 = [0.01, 0.0, 0.0]

[gains]
k_c = 1.0
lambda_c = 0.1
k_o = 1.0
gamma = 2.0

[hysteresis]
delta = 0.3
"#;
    std::fs::write(&exported, text).unwrap();
    let o = attitrack(&["run", "--config", exported.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from_file.csv").exists());

    std::fs::write(&exported, format!("{text}\n[extra]\nkey = 1\n")).unwrap();
    let o = attitrack(&["run", "--config", exported.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
}

#[test]
fn scenario_or_config_is_required() {
    let dir = tempfile::tempdir().unwrap();
    let o = attitrack(&["run"], dir.path());
    assert!(!o.status.success());
    let o = attitrack(&["run", "--scenario", "4"], dir.path());
    assert!(!o.status.success());
}
