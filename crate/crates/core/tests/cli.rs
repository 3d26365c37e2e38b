use std::path::Path;
use std::process::Command;

use gaugetrace::cli::{main_with_args, EXIT_PASS, EXIT_USAGE};
use gaugetrace::config::ScenarioConfig;
use gaugetrace::report::csv_without_metadata;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaugetrace"))
}

fn run_in(dir: &Path, args: &[&str]) -> i32 {
    let status = bin().args(args).arg("--out").arg(dir).status().unwrap();
    status.code().unwrap()
}

#[test]
fn suite_on_abelian_preset_passes_and_writes_bundle() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["suite", "--preset", "abelian-n1"]), EXIT_PASS);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert!(json["rows"].as_array().unwrap().len() > 50);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("# scenario=abelian-n1"));
}

#[test]
fn csv_body_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        assert_eq!(run_in(dir.path(), &["holonomy", "--preset", "so3-n1", "--seed", "11"]), EXIT_PASS);
    }
    let read = |d: &tempfile::TempDir| csv_without_metadata(&std::fs::read_to_string(d.path().join("report.csv")).unwrap());
    assert_eq!(read(&a).as_bytes(), read(&b).as_bytes());
}

#[test]
fn holonomy_on_zero_connection_passes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["holonomy", "--preset", "zero-n1"]), EXIT_PASS);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("holonomy-flat,")));
}

#[test]
fn missing_fiber_dimension_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = ScenarioConfig::preset("abelian-n1")
        .unwrap()
        .to_toml()
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("m ="))
        .map(|l| format!("{l}\n"))
        .collect();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, text).unwrap();
    let out = bin().args(["transport", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`m`"));
}

#[test]
fn unknown_preset_and_bad_flags_are_usage_errors() {
    assert_eq!(main_with_args(["gaugetrace", "transport", "--preset", "nope"]), EXIT_USAGE);
    assert_eq!(main_with_args(["gaugetrace", "transport"]), EXIT_USAGE);
    assert_eq!(main_with_args(["gaugetrace", "frobnicate"]), EXIT_USAGE);
    assert_eq!(main_with_args(["gaugetrace", "presets"]), EXIT_PASS);
}
