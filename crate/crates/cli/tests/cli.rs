use std::path::Path;
use std::process::{Command, Output};

fn binpose(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binpose"))
        .args(args)
        .current_dir(cwd)
        .env_remove("BINPOSE_OUT")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn config_prints_effective_toml() {
    let tmp = tempfile::tempdir().unwrap();
    let o = binpose(&["config", "--seed", "9", "--k", "3", "--sort", "depth", "--mode", "rgb"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seed = 9"));
    assert!(text.contains("k = 3"));
    assert!(text.contains("methods = [\"depth_error\"]"));
    assert!(text.contains("kind = \"rgb_scale\""));
}

#[test]
fn estimate_before_codebook_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let common = ["--scenes", "1", "--instances", "5", "--out", out];
    for stage in ["genscenes", "detect-gt"] {
        let o = binpose(&[&[stage], &common[..]].concat(), tmp.path());
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let o = binpose(&[&["estimate"], &common[..]].concat(), tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing codebook"), "{}", stderr(&o));
}

#[test]
fn bad_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "scenes = \"many\"\n").unwrap();
    let o = binpose(&["config", "--config", path.to_str().unwrap()], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn run_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = binpose(
        &["run", "--scenes", "1", "--instances", "8", "--codebook-size", "128", "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let printed = String::from_utf8(o.stdout).unwrap();
    assert!(printed.trim_end().ends_with("report.txt"));
    let report = std::fs::read_to_string(out.join("report/report.txt")).unwrap();
    assert!(report.contains("depth_error"));
}
