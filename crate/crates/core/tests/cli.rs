use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_axisym-el");

fn config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"{
  "grid": {"r_max": 1.0, "z_min": -0.5, "z_max": 0.5, "n_r": 12, "n_z": 12},
  "mode": "gl", "epsilon": 0.2, "t_end": 0.01,
  "scenario": {"id": "mixed"}, "snapshot_every": 5
}"#;

fn run(args: &[&str]) -> i32 {
    let out = Command::new(BIN).args(args).env_remove("EL_AXISYM_THREADS").output().unwrap();
    out.status.code().unwrap()
}

fn run_in(dir: &Path, sub: &str, cfg: &Path, extra: &[&str]) -> i32 {
    let out = dir.to_str().unwrap();
    let mut a = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out];
    a.extend_from_slice(extra);
    run(&a)
}

fn first_line(p: &Path) -> String {
    fs::read_to_string(p).unwrap().lines().next().unwrap().to_owned()
}

/// Dotted key paths of a JSON document, arrays collapsed to `[]`.
fn keys(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                out.push(p.clone());
                keys(x, &p, out);
            }
        }
        Value::Array(a) => {
            if let Some(x) = a.first() {
                keys(x, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

fn schema(p: &Path) -> String {
    let v: Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
    let mut k = Vec::new();
    keys(&v, "", &mut k);
    k.sort();
    k.dedup();
    k.join("\n") + "\n"
}

fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_writes_every_declared_file_once() {
    let t = tempfile::tempdir().unwrap();
    let cfg = config(t.path(), SMALL);
    let out = t.path().join("run");
    assert_eq!(run_in(&out, "run", &cfg, &[]), 0);
    let names: Vec<String> = tree(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.join("\n") + "\n", golden("run_files.txt"));
    assert_eq!(first_line(&out.join("diagnostics.csv")), "time,E_kin,E_el,E_pen,D_visc,D_tension,max_d,Lambda_t");
    assert_eq!(first_line(&out.join("concentration.csv")), "epsilon,time,probe_r,probe_z,radius,scaled_energy");
    assert_eq!(
        first_line(&out.join("weakform.csv")),
        "test_id,epsilon,k,pairing_r,pairing_z,residual_momentum,residual_director"
    );
    assert_eq!(first_line(&out.join("snapshots/step_000000.csv")), "# time=0 repr=gl");
    assert_eq!(schema(&out.join("summary.json")), golden("summary_schema.txt"));
    assert_eq!(schema(&out.join("blowup.json")), golden("blowup_schema.txt"));
    let vtk = fs::read_to_string(out.join("final/psi.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 3.0\npsi\nASCII\nDATASET STRUCTURED_POINTS\nDIMENSIONS 12 12 1\n"));
}

#[test]
fn resolved_config_reparses_and_reruns_identically() {
    let t = tempfile::tempdir().unwrap();
    let cfg = config(t.path(), SMALL);
    let a = t.path().join("a");
    let b = t.path().join("b");
    assert_eq!(run_in(&a, "run", &cfg, &[]), 0);
    assert_eq!(run_in(&b, "run", &a.join("config.resolved.json"), &[]), 0);
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn analyze_reproduces_stored_analysis() {
    let t = tempfile::tempdir().unwrap();
    let cfg = config(t.path(), SMALL);
    let out = t.path().join("run");
    assert_eq!(run_in(&out, "run", &cfg, &[]), 0);
    let before = tree(&out);
    for f in ["concentration.csv", "weakform.csv", "blowup.json", "summary.json"] {
        fs::remove_file(out.join(f)).unwrap();
    }
    assert_eq!(run(&["analyze", "--out", out.to_str().unwrap()]), 0);
    assert_eq!(tree(&out), before);
}

#[test]
fn thread_count_does_not_change_bytes() {
    let t = tempfile::tempdir().unwrap();
    let cfg = config(t.path(), SMALL);
    let a = t.path().join("a");
    let b = t.path().join("b");
    assert_eq!(run_in(&a, "run", &cfg, &["--threads", "1"]), 0);
    assert_eq!(run_in(&b, "run", &cfg, &["--threads", "4"]), 0);
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn sweep_of_one_degenerates_to_a_run() {
    let t = tempfile::tempdir().unwrap();
    let body = SMALL.replace(r#""epsilon": 0.2"#, r#""epsilon_list": [0.2]"#);
    let cfg = config(t.path(), &body);
    let out = t.path().join("sweep");
    assert_eq!(run_in(&out, "sweep", &cfg, &[]), 0);
    assert!(out.join("eps_0/diagnostics.csv").exists());
    assert_eq!(schema(&out.join("sweep_summary.json")), golden("sweep_schema.txt"));
    let s: Value = serde_json::from_str(&fs::read_to_string(out.join("sweep_summary.json")).unwrap()).unwrap();
    assert_eq!(s["members"][0]["status"], "ok");
    assert!(s["axis_report"].is_null());
}

#[test]
fn sweep_records_member_failures_and_continues() {
    let t = tempfile::tempdir().unwrap();
    // a fixed dt above the penalty bound of the smallest epsilon only
    let body = SMALL
        .replace(r#""epsilon": 0.2"#, r#""epsilon_list": [0.2, 0.01]"#)
        .replace(r#""t_end""#, r#""dt": 0.0005, "t_end""#);
    let cfg = config(t.path(), &body);
    let out = t.path().join("sweep");
    assert_eq!(run_in(&out, "sweep", &cfg, &[]), 3);
    let s: Value = serde_json::from_str(&fs::read_to_string(out.join("sweep_summary.json")).unwrap()).unwrap();
    assert_eq!(s["members"][0]["status"], "ok");
    assert_eq!(s["members"][1]["status"], "failed");
    assert!(s["members"][1]["error"].as_str().unwrap().contains("penalty"));
}

#[test]
fn eig_writes_metadata_and_modes() {
    let t = tempfile::tempdir().unwrap();
    let body = SMALL.replace(r#""snapshot_every": 5"#, r#""galerkin": {"modes": 4}"#);
    let cfg = config(t.path(), &body);
    let out = t.path().join("eig");
    assert_eq!(run_in(&out, "eig", &cfg, &[]), 0);
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("eigenbasis.json")).unwrap()).unwrap();
    assert_eq!(m["m"], 4);
    assert_eq!(m["eigenvalues"].as_array().unwrap().len(), 4);
    assert!(out.join("modes/mode_003_velocity.vtk").exists());
}

#[test]
fn galerkin_mode_override() {
    let t = tempfile::tempdir().unwrap();
    let body = SMALL.replace(r#""snapshot_every": 5"#, r#""snapshot_every": 5, "galerkin": {"modes": 6}"#);
    let cfg = config(t.path(), &body);
    let out = t.path().join("g");
    assert_eq!(run_in(&out, "run", &cfg, &["--mode", "galerkin"]), 0);
    let c: Value = serde_json::from_str(&fs::read_to_string(out.join("config.resolved.json")).unwrap()).unwrap();
    assert_eq!(c["mode"], "galerkin");
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let bad = config(t.path(), &SMALL.replace(r#""epsilon": 0.2"#, r#""epsilon": -0.1"#));
    assert_eq!(run_in(&t.path().join("x"), "run", &bad, &[]), 2);
    let swirl = config(t.path(), &SMALL.replace(r#""mode""#, r#""swirl": true, "mode""#));
    assert_eq!(run_in(&t.path().join("x"), "run", &swirl, &[]), 2);
    // too large a fixed step fails in the solver
    let unstable = config(t.path(), &SMALL.replace(r#""t_end""#, r#""dt": 0.5, "t_end""#));
    assert_eq!(run_in(&t.path().join("x"), "run", &unstable, &[]), 3);
    // analysis of a directory without outputs
    assert_eq!(run(&["analyze", "--config", unstable.to_str().unwrap(), "--out", t.path().join("empty").to_str().unwrap()]), 3);
}

#[test]
fn config_error_names_the_key() {
    let t = tempfile::tempdir().unwrap();
    let bad = config(t.path(), &SMALL.replace(r#""epsilon": 0.2"#, r#""epsilon": -0.1"#));
    let out = Command::new(BIN)
        .args(["run", "--config", bad.to_str().unwrap(), "--out", t.path().join("x").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}
