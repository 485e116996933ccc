//! C ABI over the `drem` library.
//!
//! Conventions: every fallible function returns a [`DremStatus`]; on failure
//! a message is available from [`drem_last_error_message`] on the same
//! thread until the next failing call. Handles are opaque, created by a
//! `*_load`/`*_parse`/`drem_run` call and released with the matching
//! `*_free`. Matrices are dense, row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use drem::expcli::{load_scenario, plant_bound, write_csv, Overrides};
use drem::smallmat::{adjugate, det, solve_lyapunov};
use drem::{Error, LawKind, Mat, RunResult, ScenarioFile};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DremStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Solver = 4,
    Config = 5,
    Integration = 6,
    Diagnostics = 7,
    Io = 8,
    Panic = 9,
}

pub const DREM_LAW_GRADIENT: u32 = 0;
pub const DREM_LAW_AVERAGING: u32 = 1;

/// Opaque scenario handle.
pub struct DremScenario {
    file: ScenarioFile,
}

/// Opaque handle holding one finished simulation.
pub struct DremRun {
    result: RunResult,
    names: Vec<CString>,
    summary: CString,
}

struct Failure(DremStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Dimension { .. } => DremStatus::Dimension,
            Error::Solver(_) => DremStatus::Solver,
            Error::Parameter(_) => DremStatus::InvalidArgument,
            Error::Validation { .. } | Error::Parse { .. } => DremStatus::Config,
            Error::NonFinite { .. } => DremStatus::Integration,
            Error::Diagnostics(_) => DremStatus::Diagnostics,
            Error::Io { .. } | Error::Csv { .. } => DremStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DremStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DremStatus::InvalidArgument, msg.into())
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DremStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DremStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            DremStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn square<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if n == 0 {
        return Err(invalid(format!("`{what}` must be at least 1x1")));
    }
    Ok(std::slice::from_raw_parts(p, n * n))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failing call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn drem_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn drem_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a scenario from a TOML file path or a bundled scenario name.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drem_scenario_load(source: *const c_char, out: *mut *mut DremScenario) -> DremStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let file = load_scenario(str_arg(source, "source")?)?;
        *out = Box::into_raw(Box::new(DremScenario { file }));
        Ok(())
    })
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drem_scenario_parse(toml: *const c_char, out: *mut *mut DremScenario) -> DremStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let file = ScenarioFile::parse(str_arg(toml, "toml")?, "<text>")?;
        file.validate()?;
        *out = Box::into_raw(Box::new(DremScenario { file }));
        Ok(())
    })
}

/// Overrides one numeric setting: `horizon`, `step`, `sample_every`,
/// `gamma`, `l` or `mu`. The scenario is re-validated; on failure it is
/// left unchanged.
///
/// # Safety
/// `scenario` must come from this library; `key` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn drem_scenario_set(scenario: *mut DremScenario, key: *const c_char, value: f64) -> DremStatus {
    guard(|| {
        let sc = out_ref(scenario, "scenario")?;
        let mut o = Overrides::default();
        match str_arg(key, "key")? {
            "horizon" => o.horizon = Some(value),
            "step" => o.step = Some(value),
            "sample_every" => o.sample_every = Some(value),
            "gamma" => o.gamma = Some(value),
            "l" => o.l = Some(value),
            "mu" => o.mu = Some(value),
            other => return Err(invalid(format!("unknown setting `{other}`"))),
        }
        let mut file = sc.file.clone();
        o.apply(&mut file, &[LawKind::Gradient, LawKind::Averaging])?;
        file.validate()?;
        sc.file = file;
        Ok(())
    })
}

/// Steady-state reconstruction error bound of a plant scenario.
///
/// # Safety
/// `scenario` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drem_scenario_bound(scenario: *const DremScenario, out: *mut f64) -> DremStatus {
    guard(|| {
        let sc = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        let out = out_ref(out, "out")?;
        *out = plant_bound(&sc.file)?;
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn drem_scenario_free(scenario: *mut DremScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Simulates `scenario` with law `DREM_LAW_GRADIENT` or `DREM_LAW_AVERAGING`.
/// An integration that stops early still yields a run; check
/// [`drem_run_failed`].
///
/// # Safety
/// `scenario` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drem_run(scenario: *const DremScenario, law: u32, out: *mut *mut DremRun) -> DremStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let sc = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        let law = match law {
            DREM_LAW_GRADIENT => LawKind::Gradient,
            DREM_LAW_AVERAGING => LawKind::Averaging,
            other => return Err(invalid(format!("unknown law {other}"))),
        };
        let result = drem::simulate(&sc.file, law)?;
        let names = result
            .trace
            .columns
            .iter()
            .map(|c| CString::new(c.as_str()).expect("column names have no NUL"))
            .collect();
        let json = serde_json::to_string(&result.summary).expect("summary serialises");
        let summary = CString::new(json).expect("JSON has no NUL");
        *out = Box::into_raw(Box::new(DremRun { result, names, summary }));
        Ok(())
    })
}

/// # Safety
/// `run` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn drem_run_free(run: *mut DremRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of trace rows (samples); 0 for a NULL handle.
///
/// # Safety
/// `run` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn drem_run_rows(run: *const DremRun) -> usize {
    run.as_ref().map_or(0, |r| r.result.trace.rows.len())
}

/// Number of trace columns; 0 for a NULL handle.
///
/// # Safety
/// `run` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn drem_run_columns(run: *const DremRun) -> usize {
    run.as_ref().map_or(0, |r| r.names.len())
}

/// 1 if integration stopped before the horizon, 0 otherwise.
///
/// # Safety
/// `run` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn drem_run_failed(run: *const DremRun) -> i32 {
    run.as_ref().map_or(1, |r| i32::from(r.result.summary.failure.is_some()))
}

/// Name of column `index`, owned by the run handle.
///
/// # Safety
/// `run` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drem_run_column_name(run: *const DremRun, index: usize, out: *mut *const c_char) -> DremStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        let out = out_ref(out, "out")?;
        let name = r
            .names
            .get(index)
            .ok_or_else(|| invalid(format!("column {index} out of range ({} columns)", r.names.len())))?;
        *out = name.as_ptr();
        Ok(())
    })
}

/// Index of the column called `name`.
///
/// # Safety
/// `run` must come from this library; `name` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn drem_run_column_index(run: *const DremRun, name: *const c_char, out: *mut usize) -> DremStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        let name = str_arg(name, "name")?;
        let out = out_ref(out, "out")?;
        *out = r.result.trace.index(name).ok_or_else(|| invalid(format!("no column `{name}`")))?;
        Ok(())
    })
}

/// Value at (`row`, `col`) of the trace.
///
/// # Safety
/// `run` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drem_run_value(run: *const DremRun, row: usize, col: usize, out: *mut f64) -> DremStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        let out = out_ref(out, "out")?;
        *out = *r
            .result
            .trace
            .rows
            .get(row)
            .and_then(|v| v.get(col))
            .ok_or_else(|| invalid(format!("cell ({row}, {col}) out of range")))?;
        Ok(())
    })
}

/// Copies column `col` into `buf`, which must hold `len >= rows` values.
///
/// # Safety
/// `run` must come from this library; `buf` must be writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn drem_run_copy_column(run: *const DremRun, col: usize, buf: *mut f64, len: usize) -> DremStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let trace = &r.result.trace;
        if col >= trace.columns.len() {
            return Err(invalid(format!("column {col} out of range")));
        }
        if len < trace.rows.len() {
            return Err(Failure(
                DremStatus::Dimension,
                format!("buffer holds {len} values, trace has {} rows", trace.rows.len()),
            ));
        }
        let dst = std::slice::from_raw_parts_mut(buf, len);
        for (d, row) in dst.iter_mut().zip(&trace.rows) {
            *d = row[col];
        }
        Ok(())
    })
}

/// Run summary as a JSON object, owned by the run handle.
///
/// # Safety
/// `run` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn drem_run_summary_json(run: *const DremRun) -> *const c_char {
    run.as_ref().map_or(ptr::null(), |r| r.summary.as_ptr())
}

/// Writes the trace as CSV.
///
/// # Safety
/// `run` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn drem_run_write_csv(run: *const DremRun, path: *const c_char) -> DremStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        write_csv(&r.result.trace, Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Determinant of the `n x n` matrix `m`.
///
/// # Safety
/// `m` must hold `n * n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drem_det(m: *const f64, n: usize, out: *mut f64) -> DremStatus {
    guard(|| {
        let m = Mat::from_slice(n, n, square(m, n, "m")?)?;
        *out_ref(out, "out")? = det(&m)?;
        Ok(())
    })
}

/// Adjugate of the `n x n` matrix `m`, written to `out` (`n * n` values).
///
/// # Safety
/// `m` and `out` must each hold `n * n` values.
#[no_mangle]
pub unsafe extern "C" fn drem_adjugate(m: *const f64, n: usize, out: *mut f64) -> DremStatus {
    guard(|| {
        let m = Mat::from_slice(n, n, square(m, n, "m")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let adj = adjugate(&m)?;
        std::slice::from_raw_parts_mut(out, n * n).copy_from_slice(adj.as_slice());
        Ok(())
    })
}

/// Solves `A^T P + P A = -Q` for Hurwitz `A`; `P` goes to `out`.
///
/// # Safety
/// `a`, `q` and `out` must each hold `n * n` values.
#[no_mangle]
pub unsafe extern "C" fn drem_solve_lyapunov(a: *const f64, q: *const f64, n: usize, out: *mut f64) -> DremStatus {
    guard(|| {
        let a = Mat::from_slice(n, n, square(a, n, "a")?)?;
        let q = Mat::from_slice(n, n, square(q, n, "q")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let p = solve_lyapunov(&a, &q)?;
        std::slice::from_raw_parts_mut(out, n * n).copy_from_slice(p.as_slice());
        Ok(())
    })
}
