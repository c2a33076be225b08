use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uam_vkc::scenario::Scenario;

fn uamvkc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uamvkc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn files_with(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_verb_is_a_usage_error() {
    assert_eq!(code(&uamvkc(&["fly"])), 2);
    assert_eq!(code(&uamvkc(&[])), 2);
}

#[test]
fn malformed_overrides_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["no_equals_sign", "sim.dt=\"fast\"", "sim.high_rate=333"] {
        let o = uamvkc(&["simulate", "--scenario", "task1", "--out", arg(dir.path()), "--set", bad]);
        assert_eq!(code(&o), 2, "{bad}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&uamvkc(&["plan", "--out", arg(dir.path())])), 2);
}

#[test]
fn unreadable_scenario_is_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(code(&uamvkc(&["plan", "--scenario", arg(&path), "--out", arg(dir.path())])), 3);
}

#[test]
fn plan_output_verifies_and_tampering_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let o = uamvkc(&["plan", "--scenario", "task1", "--out", arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csvs = files_with(dir.path(), "csv");
    assert_eq!(csvs.len(), 4);
    let mut args = vec!["verify", "--scenario", "task1"];
    args.extend(csvs.iter().map(|p| arg(p)));
    let v = uamvkc(&args);
    let report = String::from_utf8_lossy(&v.stdout);
    assert_eq!(code(&v), 0, "{report}");
    assert!(!report.contains("FAIL"));

    // move one waypoint of the first trajectory by 0.5 m
    let text = std::fs::read_to_string(&csvs[0]).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[10].split(',').map(String::from).collect();
    cells[1] = (cells[1].parse::<f64>().unwrap() + 0.5).to_string();
    lines[10] = cells.join(",");
    std::fs::write(&csvs[0], lines.join("\n") + "\n").unwrap();
    let v = uamvkc(&["verify", arg(&csvs[0])]);
    assert_eq!(code(&v), 1);
    assert!(String::from_utf8_lossy(&v.stdout).contains("FAIL"));

    assert_eq!(code(&uamvkc(&["verify", arg(&dir.path().join("missing.csv"))])), 2);
}

#[test]
fn export_writes_scenario_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = uamvkc(&["export", "--scenario", "drawer", "--out", arg(dir.path()), "--set", "sim.seed=9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let back = Scenario::load(dir.path().join("drawer.scenario.json")).unwrap();
    assert_eq!(back, Scenario::builtin("drawer").unwrap());
    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(config["sim"]["seed"], 9);
    assert_eq!(config["version"], 1);
}

#[test]
fn demo_writes_steps_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let o = uamvkc(&["demo", "task2", "--seed", "7", "--out", arg(dir.path())]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}\n{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("task2");
    let steps: Vec<PathBuf> = files_with(&run, "csv")
        .into_iter()
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("step"))
        .collect();
    assert_eq!(steps.len(), 6);
    for s in &steps {
        assert!(s.with_extension("json").exists());
    }
    let log = std::fs::read_to_string(run.join("simlog.csv")).unwrap();
    let header = log.lines().next().unwrap();
    assert!(header.starts_with("t,step,ref_x"));
    assert!(header.ends_with("e_p,e_theta,saturated"));
    assert!(log.lines().count() > 1000);
    let events: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("simlog.events.json")).unwrap()).unwrap();
    assert!(events.to_string().contains("\"done\""));

    // the JSON flavour of a trajectory round-trips through verify
    let conv = uamvkc(&["export", "--format", "json", "--out", arg(&run.join("json")), arg(&steps[0])]);
    assert_eq!(code(&conv), 0, "{}", String::from_utf8_lossy(&conv.stderr));
    let json = files_with(&run.join("json"), "json");
    assert_eq!(json.len(), 1);
    assert_eq!(code(&uamvkc(&["verify", arg(&json[0])])), 0);
}
