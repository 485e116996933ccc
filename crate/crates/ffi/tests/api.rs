use std::ffi::{CStr, CString};
use std::ptr;

use drem_ffi::*;

fn last_error() -> String {
    let p = drem_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(name: &str) -> *mut DremScenario {
    let src = CString::new(name).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { drem_scenario_load(src.as_ptr(), &mut sc) }, DremStatus::Ok);
    assert!(!sc.is_null());
    sc
}

fn set(sc: *mut DremScenario, key: &str, v: f64) -> DremStatus {
    let k = CString::new(key).unwrap();
    unsafe { drem_scenario_set(sc, k.as_ptr(), v) }
}

#[test]
fn det_and_adjugate() {
    let m = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
    let mut d = 0.0;
    assert_eq!(unsafe { drem_det(m.as_ptr(), 3, &mut d) }, DremStatus::Ok);
    assert!((d - 18.0).abs() < 1e-12);

    let mut adj = [0.0; 9];
    assert_eq!(unsafe { drem_adjugate(m.as_ptr(), 3, adj.as_mut_ptr()) }, DremStatus::Ok);
    // adj(M) M = det(M) I
    for i in 0..3 {
        for j in 0..3 {
            let s: f64 = (0..3).map(|k| adj[i * 3 + k] * m[k * 3 + j]).sum();
            let want = if i == j { 18.0 } else { 0.0 };
            assert!((s - want).abs() < 1e-12, "({i},{j}) = {s}");
        }
    }
}

#[test]
fn lyapunov_and_non_hurwitz() {
    let a = [-1.0, 0.0, 0.0, -2.0];
    let q = [1.0, 0.0, 0.0, 1.0];
    let mut p = [0.0; 4];
    assert_eq!(unsafe { drem_solve_lyapunov(a.as_ptr(), q.as_ptr(), 2, p.as_mut_ptr()) }, DremStatus::Ok);
    assert!((p[0] - 0.5).abs() < 1e-12 && (p[3] - 0.25).abs() < 1e-12 && p[1].abs() < 1e-12);

    let bad = [1.0, 0.0, 0.0, -1.0];
    let st = unsafe { drem_solve_lyapunov(bad.as_ptr(), q.as_ptr(), 2, p.as_mut_ptr()) };
    assert_eq!(st, DremStatus::Solver);
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_are_reported() {
    let mut d = 0.0;
    assert_eq!(unsafe { drem_det(ptr::null(), 2, &mut d) }, DremStatus::NullPointer);
    assert!(last_error().contains("`m`"));
    let m = [1.0];
    assert_eq!(unsafe { drem_det(m.as_ptr(), 1, ptr::null_mut()) }, DremStatus::NullPointer);
    assert_eq!(unsafe { drem_det(m.as_ptr(), 0, &mut d) }, DremStatus::InvalidArgument);
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { drem_scenario_load(ptr::null(), &mut sc) }, DremStatus::NullPointer);
    assert_eq!(unsafe { drem_run_rows(ptr::null()) }, 0);
    assert!(unsafe { drem_run_summary_json(ptr::null()) }.is_null());
    unsafe {
        drem_scenario_free(ptr::null_mut());
        drem_run_free(ptr::null_mut());
    }
}

#[test]
fn missing_and_malformed_scenarios() {
    let src = CString::new("/no/such/scenario.toml").unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { drem_scenario_load(src.as_ptr(), &mut sc) }, DremStatus::Io);
    assert!(sc.is_null());
    assert!(last_error().contains("/no/such/scenario.toml"));

    let text = CString::new("horizon = \"ten\"").unwrap();
    assert_eq!(unsafe { drem_scenario_parse(text.as_ptr(), &mut sc) }, DremStatus::Config);
    assert!(sc.is_null());
}

#[test]
fn settings_are_validated() {
    let sc = load("scenario_a");
    assert_eq!(set(sc, "horizon", 2.0), DremStatus::Ok);
    assert_eq!(set(sc, "warp", 1.0), DremStatus::InvalidArgument);
    assert!(last_error().contains("warp"));
    // scenario A uses the Kreisselmeier extension
    assert_eq!(set(sc, "mu", 1.0), DremStatus::Config);
    assert_eq!(set(sc, "step", -1.0), DremStatus::Config);
    let mut b = 0.0;
    // no plant: the bound is undefined
    assert_eq!(unsafe { drem_scenario_bound(sc, &mut b) }, DremStatus::Config);
    assert_eq!(unsafe { drem_run(sc, 7, &mut ptr::null_mut()) }, DremStatus::InvalidArgument);
    unsafe { drem_scenario_free(sc) };
}

#[test]
fn run_exposes_trace_and_summary() {
    let sc = load("scenario_a");
    assert_eq!(set(sc, "horizon", 5.0), DremStatus::Ok);
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { drem_run(sc, DREM_LAW_AVERAGING, &mut run) }, DremStatus::Ok);
    unsafe {
        assert_eq!(drem_run_failed(run), 0);
        let rows = drem_run_rows(run);
        let cols = drem_run_columns(run);
        assert!(rows > 10);
        assert_eq!(cols, 18);

        let mut name = ptr::null();
        assert_eq!(drem_run_column_name(run, 0, &mut name), DremStatus::Ok);
        assert_eq!(CStr::from_ptr(name).to_str().unwrap(), "t");
        assert_eq!(drem_run_column_name(run, cols, &mut name), DremStatus::InvalidArgument);

        let col_name = CString::new("theta_tilde_1").unwrap();
        let mut idx = 0;
        assert_eq!(drem_run_column_index(run, col_name.as_ptr(), &mut idx), DremStatus::Ok);

        let mut buf = vec![0.0; rows];
        assert_eq!(drem_run_copy_column(run, idx, buf.as_mut_ptr(), rows), DremStatus::Ok);
        let mut last = 0.0;
        assert_eq!(drem_run_value(run, rows - 1, idx, &mut last), DremStatus::Ok);
        assert_eq!(buf[rows - 1], last);
        assert_eq!(drem_run_copy_column(run, idx, buf.as_mut_ptr(), rows - 1), DremStatus::Dimension);

        let json = CStr::from_ptr(drem_run_summary_json(run)).to_str().unwrap();
        let v: serde_json::Value = serde_json::from_str(json).unwrap();
        assert_eq!(v["scenario"], "scenario_a");
        assert_eq!(v["theta_tilde_final"][0].as_f64().unwrap(), last);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("a.csv").to_str().unwrap()).unwrap();
        assert_eq!(drem_run_write_csv(run, path.as_ptr()), DremStatus::Ok);
        let text = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert_eq!(text.lines().count(), rows + 1);

        drem_run_free(run);
        drem_scenario_free(sc);
    }
}

#[test]
fn plant_bound_through_ffi() {
    let sc = load("scenario_c");
    let mut b = 0.0;
    assert_eq!(unsafe { drem_scenario_bound(sc, &mut b) }, DremStatus::Ok);
    assert!(b.is_finite() && b > 0.0);
    unsafe { drem_scenario_free(sc) };
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(drem_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
