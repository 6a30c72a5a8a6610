use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("anisofrac-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run(dir: &PathBuf, cfg: &Value, args: &[&str]) -> Output {
    let path = dir.join("input.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_anisofrac"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap()
}

fn summary(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn solve_config(g: Value) -> Value {
    json!({
        "anisotropy": {"b": [1.0, 2.0], "s": 0.5},
        "grid": {"lo": [-1.0, -1.0], "hi": [1.0, 1.0], "nodes": [13, 13]},
        "solve": {"g": g, "options": {"tol": 1e-12, "max_iter": 100000, "damping": 1.0}}
    })
}

#[test]
fn constant_data_is_reproduced() {
    let d = scratch("const");
    let out = d.join("out");
    let s = summary(&run(&d, &solve_config(json!({"type": "constant", "value": 2.5})), &["solve", "--out", out.to_str().unwrap()]));
    assert_eq!(s["command"], "solve");
    assert!(s["result"]["max_abs_error_constant"].as_f64().unwrap() <= 1e-10);
    for f in ["config.json", "summary.json", "solution.anlg", "slice_0.csv", "slice_1.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let bin = fs::read(out.join("solution.anlg")).unwrap();
    assert_eq!(&bin[..4], b"ANLG");
    assert_eq!(u16::from_le_bytes([bin[4], bin[5]]), 1);
    assert_eq!(u16::from_le_bytes([bin[6], bin[7]]), 2);
    let header = 8 + 2 * 8 + 2 * 8 + 2 * 8 + 8;
    assert_eq!(bin.len(), header + 13 * 13 * 8);
    let first = f64::from_le_bytes(bin[header..header + 8].try_into().unwrap());
    assert!((first - 2.5).abs() < 1e-10);
}

#[test]
fn harnack_of_constant_solution_is_one() {
    let d = scratch("harnack");
    let out = d.join("out");
    let s = summary(&run(&d, &solve_config(json!({"type": "constant", "value": 1.0})), &["verify", "harnack", "--out", out.to_str().unwrap()]));
    assert_eq!(s["command"], "verify harnack");
    let ratio = s["result"]["report"]["ratio"].as_f64().unwrap();
    assert!((ratio - 1.0).abs() < 1e-9, "{ratio}");
}

#[test]
fn abp_spike_envelope_is_a_tent() {
    let d = scratch("abp");
    let out = d.join("out");
    let cfg = json!({
        "anisotropy": {"b": [2.0], "s": 1.0},
        "grid": {"lo": [-1.5], "hi": [1.5], "nodes": [61]},
        "abp": {"input": {"type": "spike", "height": 1.0, "floor": -0.2}, "f": 50000.0}
    });
    let s = summary(&run(&d, &cfg, &["abp", "--out", out.to_str().unwrap()]));
    assert_eq!(s["result"]["all_properties"], true);
    let mut rdr = csv::Reader::from_path(out.join("envelope.csv")).unwrap();
    let head = rdr.headers().unwrap().clone();
    assert_eq!(head.iter().collect::<Vec<_>>(), ["x0", "u", "gamma", "contact"]);
    for rec in rdr.records() {
        let r = rec.unwrap();
        let x: f64 = r[0].parse().unwrap();
        let g: f64 = r[2].parse().unwrap();
        assert!((g - (1.0 - x.abs() / 3.0)).abs() < 1e-9, "{x} {g}");
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let d = scratch("unknown");
    let out = d.join("out");
    let mut cfg = solve_config(json!({"type": "constant", "value": 1.0}));
    cfg["solve"]["tolerance"] = json!(1e-6);
    let o = run(&d, &cfg, &["solve", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("tolerance"));
    assert!(!out.exists());
}

#[test]
fn missing_output_directory_is_an_error() {
    let d = scratch("noout");
    let o = run(&d, &solve_config(json!({"type": "dipole"})), &["solve"]);
    assert!(!o.status.success());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let d = scratch("threads");
    let cfg = solve_config(json!({"type": "random", "nonnegative": false}));
    let mut outs = Vec::new();
    for t in ["1", "4"] {
        let out = d.join(format!("out{t}"));
        summary(&run(&d, &cfg, &["solve", "--threads", t, "--seed", "42", "--out", out.to_str().unwrap()]));
        outs.push(out);
    }
    for f in ["summary.json", "solution.anlg", "slice_0.csv", "slice_1.csv"] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
    let s: Value = serde_json::from_slice(&fs::read(outs[0].join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["seed"], 42);
}

#[test]
fn seed_changes_random_data() {
    let d = scratch("seed");
    let cfg = solve_config(json!({"type": "random", "nonnegative": true}));
    let a = summary(&run(&d, &cfg, &["solve", "--seed", "1", "--out", d.join("a").to_str().unwrap()]));
    let b = summary(&run(&d, &cfg, &["solve", "--seed", "2", "--out", d.join("b").to_str().unwrap()]));
    assert_ne!(a["result"]["max"], b["result"]["max"]);
}
