use std::path::Path;
use std::process::{Command, Output};

fn bkm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bkm"))
        .args(args)
        .current_dir(cwd)
        .env("BKM_THREADS", "2")
        .output()
        .expect("bkm runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_KB: &str = r#"
schema_version = 1
name = "small-kb"
outputs = ["csv", "frames"]

[bkm]
n = 2
m = [-1.0]
lambda = "inf"
chart = "kb-form"

[reduction]
N = 2
c = [0, 0, 1, 0, -2, 0, 1]

[start]
w = [0.0, 0.0]

[grid]
t = { min = -0.5, max = 0.5, count = 9 }
x = { min = -1.0, max = 1.0, count = 21 }

[flow]
rel_tol = 1e-12
abs_tol = 1e-14

[checks]
closed_form_kb = 1e-8
"#;

#[test]
fn run_verify_export() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL_KB).unwrap();
    let run = bkm(&["run", "small.toml", "-o", "res"], dir.path());
    assert_eq!(run.status.code(), Some(0), "{}", stdout(&run));
    assert!(stdout(&run).contains("PASS closed-form-kb"));
    let res = dir.path().join("res");
    for f in ["solution.json", "summary.json", "scenario.toml", "solution.csv", "frames/frame_0008.csv"] {
        assert!(res.join(f).exists(), "{f} missing");
    }

    let verify = bkm(&["verify", "res"], dir.path());
    assert_eq!(verify.status.code(), Some(0), "{}", stdout(&verify));

    let export = bkm(&["export", "res", "--format", "csv", "-o", "again"], dir.path());
    assert_eq!(export.status.code(), Some(0));
    let a = std::fs::read_to_string(res.join("solution.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("again/solution.csv")).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with("t,x,u_1,u_2,q\n"));
}

#[test]
fn failed_threshold_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let tight = SMALL_KB.replace("closed_form_kb = 1e-8", "closed_form_kb = 1e-30");
    std::fs::write(dir.path().join("tight.toml"), tight).unwrap();
    let out = bkm(&["run", "tight.toml", "-o", "res"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL closed-form-kb"));
}

#[test]
fn malformed_c_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL_KB.replace("c = [0, 0, 1, 0, -2, 0, 1]", "c = [0, 1, 0, -2, 0, 1]");
    std::fs::write(dir.path().join("bad.toml"), bad).unwrap();
    let out = bkm(&["run", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reduction.c"));
}

#[test]
fn missing_scenario_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = bkm(&["run", "no-such-thing"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn presets_list_and_show() {
    let dir = tempfile::tempdir().unwrap();
    let list = bkm(&["presets", "list"], dir.path());
    assert_eq!(list.status.code(), Some(0));
    for name in ["kb-exact", "kdv-cnoidal", "kdv-2soliton", "bkm4-n2-rope", "bkm2-cnoidal"] {
        assert!(stdout(&list).contains(name), "{name} not listed");
    }
    let show = bkm(&["presets", "show", "kb-exact"], dir.path());
    assert_eq!(show.status.code(), Some(0));
    assert!(stdout(&show).contains("name = \"kb-exact\""));
    let unknown = bkm(&["presets", "show", "nope"], dir.path());
    assert_ne!(unknown.status.code(), Some(0));
}

#[test]
fn repeated_runs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL_KB).unwrap();
    for out in ["a", "b"] {
        assert_eq!(bkm(&["run", "small.toml", "-o", out], dir.path()).status.code(), Some(0));
    }
    let a = std::fs::read(dir.path().join("a/solution.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/solution.csv")).unwrap();
    assert_eq!(a, b);
}
