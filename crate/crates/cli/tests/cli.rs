use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn polysim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polysim")).args(args).output().expect("run polysim")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const DROP: &str = r#"
[world]
end_time = 0.08

[[bodies]]
name = "ground"
static = true
shape = { kind = "box", half_extents = [5.0, 5.0, 0.5] }
position = [0.0, 0.0, -0.5]

[[bodies]]
name = "cube"
shape = { kind = "box", half_extents = [0.5, 0.5, 0.5] }
position = [0.0, 0.0, 0.51]
"#;

#[test]
fn short_run_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write(tmp.path(), "drop.toml", DROP);
    let out = tmp.path().join("out");
    let o = polysim(&[&scenario, "--out-dir", out.to_str().unwrap(), "--verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("steps = "));
    assert!(stdout.contains("no problems"));

    let events = fs::read_to_string(out.join("events.csv")).unwrap();
    assert!(events.starts_with("t,kind,pair,detail\n"));
    // the cube lands at about 0.05 s
    assert!(events.contains("manifold_change,b0-b1,none -> face_face"));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,h,branch,min_dist,energy\n"));
    let summary: toml::Table = fs::read_to_string(out.join("summary.toml")).unwrap().parse().unwrap();
    let steps = summary["steps"].as_integer().unwrap();
    assert_eq!(steps as usize, trace.lines().count() - 1);
    assert_eq!(summary["end_time"].as_float(), Some(0.08));
}

#[test]
fn flags_override_the_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write(tmp.path(), "drop.toml", DROP);
    let out = tmp.path().join("out");
    let o = polysim(&[&scenario, "--out-dir", out.to_str().unwrap(), "--end-time", "0.02", "--max-step", "0.005", "--quiet"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    // free fall only: four full steps
    assert_eq!(trace.lines().count() - 1, 4);
}

#[test]
fn usage_errors_exit_with_two() {
    let o = polysim(&["--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    let o = polysim(&[]);
    assert_eq!(o.status.code(), Some(2));
    let o = polysim(&["/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn bad_scenarios_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let broken = write(tmp.path(), "broken.toml", "[world\nend_time = 1");
    assert_eq!(polysim(&[&broken, "--out-dir", tmp.path().to_str().unwrap()]).status.code(), Some(2));
    let massless = write(
        tmp.path(),
        "massless.toml",
        "[[bodies]]\nname = \"x\"\nmass = 0.0\nshape = { kind = \"box\", half_extents = [1.0, 1.0, 1.0] }\n",
    );
    assert_eq!(polysim(&[&massless, "--out-dir", tmp.path().to_str().unwrap()]).status.code(), Some(2));
    let scenario = write(tmp.path(), "drop.toml", DROP);
    let o = polysim(&[&scenario, "--out-dir", tmp.path().to_str().unwrap(), "--max-step", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn interpenetrating_start_fails_with_empty_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let overlap = DROP.replace("[0.0, 0.0, 0.51]", "[0.0, 0.0, 0.2]");
    let scenario = write(tmp.path(), "overlap.toml", &overlap);
    let out = tmp.path().join("out");
    let o = polysim(&[&scenario, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).to_lowercase().contains("interpenetrat"));
    assert_eq!(fs::read_to_string(out.join("events.csv")).unwrap(), "t,kind,pair,detail\n");
    assert_eq!(fs::read_to_string(out.join("trace.csv")).unwrap(), "t,h,branch,min_dist,energy\n");
}

#[test]
fn empty_world_runs_to_the_end() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write(tmp.path(), "empty.toml", "[world]\nend_time = 0.1\n");
    let out = tmp.path().join("out");
    let o = polysim(&[&scenario, "--out-dir", out.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("events.csv")).unwrap(), "t,kind,pair,detail\n");
}
