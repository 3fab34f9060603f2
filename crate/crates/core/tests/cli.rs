use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn riskfsc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskfsc")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn data_rows(path: &Path) -> usize {
    let text = fs::read_to_string(path).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).count() - 1
}

fn grid(dir: &Path) {
    let out = riskfsc(dir, &["gridworld", "--rows", "4", "--cols", "4", "--obstacles", "2", "--seed", "3", "--out", "grid"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

fn solve(dir: &Path, alpha: &str, out_file: &str) {
    let out = riskfsc(
        dir,
        &["solve", "--model", "grid.toml", "--risk", "cvar", "--alpha", alpha, "--max-nodes", "2", "--seed", "1", "--out", out_file],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("objective "));
}

#[test]
fn full_pipeline_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    grid(dir);
    for f in ["grid.toml", "grid.pomdp", "grid.manifest.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    solve(dir, "0.5", "fsc.json");
    let fsc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("fsc.json")).unwrap()).unwrap();
    let nodes = fsc["nodes"].as_u64().unwrap() as usize;
    // 16 cells plus the two sinks.
    assert_eq!(data_rows(&dir.join("fsc.values.csv")), 18 * nodes);
    assert!(dir.join("fsc.trace.json").exists() && dir.join("fsc.manifest.json").exists());

    let out = riskfsc(dir, &["evaluate", "--model", "grid.pomdp", "--fsc", "fsc.json", "--risk", "cvar", "--alpha", "0.5", "--out", "eval"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(data_rows(&dir.join("eval.values.csv")), 18 * nodes);

    let out = riskfsc(dir, &["simulate", "--spec", "grid.toml", "--fsc", "fsc.json", "--scenarios", "100", "--seed", "2", "--out", "sim"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(data_rows(&dir.join("sim.csv")), 100);
    // Dots inside an output prefix are kept.
    let out = riskfsc(dir, &["simulate", "--spec", "grid.toml", "--fsc", "fsc.json", "--scenarios", "5", "--out", "p_0.2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.join("p_0.2.csv").exists() && dir.join("p_0.2.summary.json").exists());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("sim.summary.json")).unwrap()).unwrap();
    let total: u64 = ["failures", "successes", "timeouts"].iter().map(|k| summary[k].as_u64().unwrap()).sum();
    assert_eq!(total, 100);

    for format in ["csv", "svg"] {
        let out = riskfsc(
            dir,
            &["plot", "--model", "grid.toml", "--fsc", "fsc.json", "--values", "fsc.values.csv", "--format", format, "--out", "plot"],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(data_rows(&dir.join("plot.csv")), 16);
    assert!(fs::read_to_string(dir.join("plot.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        grid(dir);
        solve(dir, "0.3", "fsc.json");
    }
    for f in ["grid.toml", "grid.pomdp", "fsc.json", "fsc.values.csv", "fsc.optimum.csv", "fsc.trace.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn risk_levels_give_different_controllers() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    grid(dir);
    solve(dir, "0.9", "loose.json");
    solve(dir, "0.1", "tight.json");
    assert_ne!(fs::read(dir.join("loose.json")).unwrap(), fs::read(dir.join("tight.json")).unwrap());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    grid(dir);

    let out = riskfsc(dir, &["solve", "--model", "grid.toml", "--risk", "cvar", "--max-nodes", "2", "--out", "x.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("alpha"));
    assert_eq!(code(&riskfsc(dir, &["solve", "--bogus"])), 2);
    assert_eq!(code(&riskfsc(dir, &["--help"])), 0);

    let out = riskfsc(dir, &["gridworld", "--rows", "10", "--cols", "10", "--obstacles", "101", "--out", "big"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    fs::write(dir.join("broken.pomdp"), "format: riskfsc-pomdp 1\nstates: a\n").unwrap();
    let out = riskfsc(dir, &["solve", "--model", "broken.pomdp", "--risk", "expectation", "--max-nodes", "2", "--out", "x.json"]);
    assert_eq!(code(&out), 4);

    let out = riskfsc(dir, &["solve", "--model", "missing.pomdp", "--risk", "expectation", "--max-nodes", "2", "--out", "x.json"]);
    assert_eq!(code(&out), 4);

    solve(dir, "0.5", "fsc.json");
    let text = fs::read_to_string(dir.join("fsc.json")).unwrap().replacen("\"action\": ", "\"action\": 9", 1);
    fs::write(dir.join("renamed.json"), text).unwrap();
    let out = riskfsc(dir, &["evaluate", "--model", "grid.pomdp", "--fsc", "renamed.json", "--risk", "expectation", "--out", "e"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));

    let out = riskfsc(
        dir,
        &["plot", "--model", "grid.pomdp", "--fsc", "fsc.json", "--values", "fsc.values.csv", "--format", "csv", "--out", "p"],
    );
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("not a grid-world config"));
}
