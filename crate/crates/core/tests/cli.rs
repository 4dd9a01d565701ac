use std::path::Path;
use std::process::Command;

fn betaqm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_betaqm"))
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = betaqm()
        .args(["run", "--aqm", "red", "-n", "4", "--duration", "1.5", "--seed", "1,2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 5, "{names:?}");
    assert!(names.contains(&"queue_trace_red_default_seed2.csv".to_owned()));
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 + 1);
    assert!(metrics.lines().last().unwrap().starts_with("red,,mean,"));
}

#[test]
fn sweep_flag_expands_runs() {
    let out = betaqm()
        .args(["check", "--aqm", "betared", "--sweep", "theta=0.05,0.3", "--sweep", "n_flows=10,20,40", "--seed", "7"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("betared [n_flows=40;theta=0.3]"), "{stdout}");
    assert!(stdout.trim_end().ends_with("6 runs"));
}

#[test]
fn unknown_scheme_fails_with_diagnostic() {
    let out = betaqm().args(["run", "--aqm", "nosuch", "--duration", "1"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("aqm") && stderr.contains("nosuch"), "{stderr}");
}

#[test]
fn out_of_range_parameter_fails() {
    let out = betaqm().args(["check", "--aqm", "betared", "--sweep", "theta=1.5"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));
}

#[test]
fn missing_spec_file_fails() {
    let out = betaqm().args(["check", "/nonexistent/spec.toml"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn shipped_experiment_specs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = betaqm().arg("check").arg(&path).output().unwrap();
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
            n += 1;
        }
    }
    assert!(n >= 7);
}

#[test]
fn cli_flags_override_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.toml");
    std::fs::write(&spec, "aqm = \"pie\"\nn_flows = 3\nduration = 100.0\nseeds = [1, 2, 3]\n").unwrap();
    let out = betaqm().arg("check").arg(&spec).args(["--aqm", "codel", "--duration", "2", "--seed", "9"]).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("codel [] duration=2 seeds=[9]"), "{stdout}");
}
