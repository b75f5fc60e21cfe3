//! Runs the built binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn sparsegen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsegen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn trace(dir: &Path, program: &str, pattern: &str, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["trace", "--program", program, "--pattern", pattern, "--out", out];
    args.extend_from_slice(extra);
    sparsegen(&args)
}

#[test]
fn trace_then_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    for (program, pattern, label) in [
        ("expr3", "random:60,5,2", "rel<=1e-12: PASS"),
        ("cotan", "grid:6x6", "rel<=1e-12: PASS"),
        ("energy-hessian", "grid:4x4", "rel<=1e-12: PASS"),
    ] {
        let dir = tmp.path().join(program);
        let t = trace(&dir, program, pattern, &[]);
        assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
        for f in ["manifest.json", "data.bin", "stats.json"] {
            assert!(dir.join(f).is_file(), "{f} missing");
        }
        let c = sparsegen(&["check", dir.to_str().unwrap(), "--seed", "3"]);
        assert_eq!(c.status.code(), Some(0), "{}", stdout(&c));
        assert!(stdout(&c).contains(label), "{}", stdout(&c));
    }
}

#[test]
fn unsimplified_plans_check_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let t = trace(tmp.path(), "lpow2", "grid:6x6", &["--no-simplify"]);
    assert!(t.status.success());
    assert!(stdout(&t).contains("simplify  0 rewrites"), "{}", stdout(&t));
    let stats: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["program"]["program"], "lpow2");
    let c = sparsegen(&["check", tmp.path().to_str().unwrap()]);
    assert_eq!(c.status.code(), Some(0));
    assert!(stdout(&c).contains("bitwise: PASS"));
}

#[test]
fn corrupted_blob_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(trace(tmp.path(), "expr1", "random:30,4,1", &[]).status.success());
    let blob = tmp.path().join("data.bin");
    let mut bytes = std::fs::read(&blob).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x5a;
    std::fs::write(&blob, bytes).unwrap();
    let c = sparsegen(&["check", tmp.path().to_str().unwrap()]);
    assert_eq!(c.status.code(), Some(2));
}

#[test]
fn missing_plan_and_bad_arguments_exit_2() {
    assert_eq!(sparsegen(&["check", "/nonexistent/plan"]).status.code(), Some(2));
    assert_eq!(
        sparsegen(&["trace", "--program", "nope", "--pattern", "grid:4x4", "--out", "/tmp/x"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        sparsegen(&["dump-deps", "--program", "expr1", "--pattern", "random:0,1,1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn emit_respects_parallel_option() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(trace(tmp.path(), "lpow2", "grid:5x5", &[]).status.success());
    let plan = tmp.path().to_str().unwrap();
    let serial = tmp.path().join("serial.c");
    let e = sparsegen(&["emit", plan, "--parallel", "none", "--out", serial.to_str().unwrap()]);
    assert!(e.status.success());
    let src = std::fs::read_to_string(&serial).unwrap();
    assert!(!src.contains("#pragma omp"));
    assert!(src.contains("void sg_run("), "{src}");
    let e = sparsegen(&["emit", plan]);
    assert!(e.status.success());
    let src = std::fs::read_to_string(tmp.path().join("kernels.c")).unwrap();
    assert!(src.contains("#pragma omp"));
}

#[test]
fn bench_reports_json() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(trace(tmp.path(), "expr2", "random:40,4,1", &[]).status.success());
    let b = sparsegen(&["bench", tmp.path().to_str().unwrap(), "--iters", "1", "--json"]);
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    let r: serde_json::Value = serde_json::from_str(&stdout(&b)).unwrap();
    assert_eq!(r["iters"], 1);
    assert!(r["naive_seconds"].as_f64().unwrap() >= 0.0);
    if !r["compiled_seconds"].is_null() {
        assert_eq!(r["compiled_matches_interpreter"], true);
    }
}

#[test]
fn dump_deps_writes_dot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("deps.dot");
    let d = sparsegen(&[
        "dump-deps",
        "--program",
        "cotan",
        "--pattern",
        "grid:4x4",
        "--tcompl",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(d.status.success());
    let dot = std::fs::read_to_string(out).unwrap();
    assert!(dot.starts_with("digraph"), "{dot}");
    assert!(dot.contains("->"));
}
