use std::path::Path;
use std::process::{Command, Output};

use mathrev::eqc::{pid_source, svm_source};

fn run(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_mathrev")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(args: &[&str]) -> String {
    String::from_utf8(run(args).stdout).unwrap()
}

fn write_image(dir: &Path, name: &str, src: &str) -> String {
    let s = dir.join(format!("{name}.s"));
    std::fs::write(&s, src).unwrap();
    let img = dir.join(format!("{name}.img"));
    run(&["asm", s.to_str().unwrap(), "-o", img.to_str().unwrap()]);
    img.to_str().unwrap().to_string()
}

#[test]
fn assemble_then_list_callgraph() {
    let dir = tempfile::tempdir().unwrap();
    let img = write_image(dir.path(), "svm", svm_source());
    let text = stdout(&["callgraph", &img]);
    assert!(text.contains("classify -> [kernel, thresh]"), "{text}");
    assert!(text.contains("expf (intrinsic)"), "{text}");
    let json: serde_json::Value = serde_json::from_str(&stdout(&["callgraph", &img, "--json"])).unwrap();
    assert!(json["edges"].as_array().unwrap().len() >= 4);
}

#[test]
fn analyze_prints_equation_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let img = write_image(dir.path(), "pid", pid_source());
    let text = stdout(&["analyze", &img, "saturate"]);
    assert!(text.contains("y0 = { x0 if x0 <= x2 and x0 > x1; x1 if x0 <= x2; x2 otherwise }"), "{text}");
    let text = stdout(&["analyze", &img, "pid_update", "--hide-spills"]);
    assert!(text.contains("y1 = x0 - x1"), "{text}");
    assert!(text.contains("saturate("), "{text}");
    let text = stdout(&["analyze", &img, "pid_update", "--inline"]);
    assert!(!text.contains("saturate("), "{text}");
}

#[test]
fn analyze_json_with_substituted_constants() {
    let dir = tempfile::tempdir().unwrap();
    let img = write_image(dir.path(), "svm", svm_source());
    let v: serde_json::Value =
        serde_json::from_str(&stdout(&["analyze", &img, "kernel", "--subst-consts", "--json"])).unwrap();
    assert!(v["outputs"][0]["pretty"].as_str().unwrap().contains("25.6"));
    let strict =
        Command::new(env!("CARGO_BIN_EXE_mathrev")).args(["analyze", &img, "classify", "--strict"]).output().unwrap();
    assert!(!strict.status.success());
    assert!(String::from_utf8_lossy(&strict.stderr).contains("has not been analyzed"));
}

#[test]
fn dataset_generation_and_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, r#"{"n_nodes": [5], "n_inputs": [1], "models_per_cell": 2}"#).unwrap();
    let data = dir.path().join("data");
    run(&["dataset", "gen", grid.to_str().unwrap(), "--seed", "5", "-o", data.to_str().unwrap()]);
    assert!(data.join("manifest.json").exists());
    let report = dir.path().join("report");
    let text = stdout(&["bench", "run", data.to_str().unwrap(), "-o", report.to_str().unwrap()]);
    assert!(text.contains("total"));
    for suffix in ["report.json", "report.txt", "report_hist.csv"] {
        assert!(dir.path().join(suffix).exists(), "{suffix}");
    }
}
