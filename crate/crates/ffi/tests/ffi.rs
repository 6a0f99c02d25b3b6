use std::ffi::{c_char, CStr, CString};
use std::process::Command;
use std::ptr;

use axisym_el_ffi::*;

const SMALL: &str = r#"{
  "grid": {"r_max": 1.0, "z_min": -1.0, "z_max": 1.0, "n_r": 12, "n_z": 12},
  "mode": "gl",
  "epsilon": 0.2,
  "dt": "auto",
  "t_end": 0.01,
  "scenario": {"id": "mixed"},
  "snapshot_every": 5
}"#;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        let n = el_last_error_message(buf.as_mut_ptr(), buf.len());
        assert_eq!(n, el_last_error_length());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn config(json: &str) -> *mut ElConfig {
    let text = CString::new(json).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { el_config_parse(text.as_ptr(), &mut cfg) }, ElStatus::Ok, "{}", last_error());
    cfg
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(el_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_errors_are_reported() {
    let bad = CString::new(SMALL.replace("0.2", "-0.1")).unwrap();
    let mut cfg = 1usize as *mut ElConfig;
    let status = unsafe { el_config_parse(bad.as_ptr(), &mut cfg) };
    assert_eq!(status, ElStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("epsilon"));

    assert_eq!(unsafe { el_config_parse(ptr::null(), &mut cfg) }, ElStatus::NullPointer);
    assert_eq!(unsafe { el_config_parse(bad.as_ptr(), ptr::null_mut()) }, ElStatus::NullPointer);
    let invalid = [0xffu8 as c_char, 0];
    assert_eq!(unsafe { el_config_parse(invalid.as_ptr(), &mut cfg) }, ElStatus::InvalidUtf8);

    // truncation keeps the NUL and reports the full length
    let mut tiny = [1 as c_char; 4];
    let n = unsafe { el_last_error_message(tiny.as_mut_ptr(), tiny.len()) };
    assert!(n > 3);
    assert_eq!(tiny[3], 0);
}

#[test]
fn config_queries() {
    let cfg = config(SMALL);
    let (mut nr, mut nz, mut ne) = (0, 0, 0);
    unsafe {
        assert_eq!(el_config_grid_size(cfg, &mut nr, &mut nz), ElStatus::Ok);
        assert_eq!(el_config_epsilon_count(cfg, &mut ne), ElStatus::Ok);
        assert_eq!(el_config_grid_size(ptr::null(), &mut nr, &mut nz), ElStatus::NullPointer);
        el_config_free(cfg);
        el_config_free(ptr::null_mut());
    }
    assert_eq!((nr, nz, ne), (12, 12, 1));
}

#[test]
fn stepping_matches_the_batch_run() {
    let cfg = config(SMALL);
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut holds = false;
    assert_eq!(unsafe { el_run(cfg, out.as_ptr(), &mut holds) }, ElStatus::Ok, "{}", last_error());
    assert!(holds);
    let csv = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let batch: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();

    let mut sim = ptr::null_mut();
    let (mut total, mut count) = (0, 0);
    let (mut dt, mut time) = (0.0, 0.0);
    unsafe {
        assert_eq!(el_simulation_new(cfg, 0, &mut sim), ElStatus::Ok);
        assert_eq!(el_simulation_total_steps(sim, &mut total), ElStatus::Ok);
        assert_eq!(el_simulation_step(sim, total), ElStatus::Ok, "{}", last_error());
        el_simulation_record_count(sim, &mut count);
        el_simulation_time(sim, &mut dt, &mut time);
    }
    assert_eq!(count, total + 1);
    assert_eq!(batch.len(), count);
    assert!((time - total as f64 * dt).abs() < 1e-12);
    for (k, row) in batch.iter().enumerate() {
        let mut r = ElRecord::default();
        assert_eq!(unsafe { el_simulation_record(sim, k, &mut r) }, ElStatus::Ok);
        let got = [r.time, r.e_kin, r.e_el, r.e_pen, r.d_visc, r.d_tension, r.max_d, r.lambda_t];
        for (a, b) in got.iter().zip(row) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "record {k}: {a} vs {b}");
        }
    }
    let mut r = ElRecord::default();
    assert_eq!(unsafe { el_simulation_record(sim, count, &mut r) }, ElStatus::OutOfRange);

    let state = std::fs::read_to_string(dir.path().join("final/state.csv")).unwrap();
    let psi: Vec<f64> = state
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('r'))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let mut buf = vec![0.0; 144];
    unsafe {
        assert_eq!(el_simulation_field(sim, ElField::Psi, buf.as_mut_ptr(), 143), ElStatus::BufferTooSmall);
        assert_eq!(el_simulation_field(sim, ElField::Psi, buf.as_mut_ptr(), buf.len()), ElStatus::Ok);
        assert_eq!(el_simulation_field(sim, ElField::Angle, buf.as_mut_ptr(), buf.len()), ElStatus::Config);
        el_simulation_free(sim);
        el_config_free(cfg);
    }
    assert_close(&psi, &buf);
}

fn assert_close(csv: &[f64], buf: &[f64]) {
    assert_eq!(csv.len(), buf.len());
    for (a, b) in csv.iter().zip(buf) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300) || a == b, "{a} vs {b}");
    }
}

#[test]
fn sphere_and_galerkin_members() {
    let sphere = config(&SMALL.replace("\"gl\"", "\"sphere\"").replace("mixed", "hedgehog"));
    let galerkin = config(&SMALL.replace("\"gl\"", "\"galerkin\""));
    let mut buf = vec![0.0; 144];
    for cfg in [sphere, galerkin] {
        let mut sim = ptr::null_mut();
        unsafe {
            assert_eq!(el_simulation_new(cfg, 0, &mut sim), ElStatus::Ok, "{}", last_error());
            assert_eq!(el_simulation_step(sim, 3), ElStatus::Ok, "{}", last_error());
            assert_eq!(el_simulation_field(sim, ElField::DirectorZ, buf.as_mut_ptr(), buf.len()), ElStatus::Ok);
            el_simulation_free(sim);
            assert_eq!(el_simulation_new(cfg, 1, &mut sim), ElStatus::OutOfRange);
            assert!(sim.is_null());
            el_config_free(cfg);
        }
        assert!(buf.iter().all(|v| v.is_finite() && v.abs() <= 1.0 + 1e-9));
    }
}

#[test]
fn sweep_analyze_and_eig() {
    let cfg = config(&SMALL.replace("\"epsilon\": 0.2", "\"epsilon_list\": [0.2, 0.15]"));
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut failed = 9;
    unsafe {
        assert_eq!(el_run(cfg, out.as_ptr(), ptr::null_mut()), ElStatus::Config);
        assert_eq!(el_sweep(cfg, out.as_ptr(), &mut failed), ElStatus::Ok, "{}", last_error());
        assert_eq!(failed, 0);
        let summary = dir.path().join("sweep_summary.json");
        let before = std::fs::read(&summary).unwrap();
        std::fs::remove_file(&summary).unwrap();
        assert_eq!(el_analyze(ptr::null(), out.as_ptr()), ElStatus::Ok, "{}", last_error());
        assert_eq!(std::fs::read(&summary).unwrap(), before);
        let eig_dir = dir.path().join("eig");
        let eig_out = CString::new(eig_dir.to_str().unwrap()).unwrap();
        assert_eq!(el_eig(cfg, eig_out.as_ptr()), ElStatus::Ok, "{}", last_error());
        assert!(eig_dir.join("eigenbasis.json").exists());
        let empty = tempfile::tempdir().unwrap();
        let empty_out = CString::new(empty.path().to_str().unwrap()).unwrap();
        assert_ne!(el_analyze(ptr::null(), empty_out.as_ptr()), ElStatus::Ok);
        el_config_free(cfg);
    }
}

#[test]
fn header_declares_api_and_compiles_as_c() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/axisym_el.h")).unwrap();
    for name in [
        "el_version",
        "el_last_error_message",
        "el_config_parse",
        "el_run",
        "el_sweep",
        "el_analyze",
        "el_eig",
        "el_simulation_new",
        "el_simulation_step",
        "el_simulation_field",
        "el_simulation_free",
        "EL_STATUS_OK = 0",
        "typedef struct ElConfig ElConfig",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"axisym_el.h\"\nint main(void) { ElConfig *c = 0; ElRecord r; (void)r; \
         return el_config_parse(\"{}\", &c) == EL_STATUS_OK; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}
