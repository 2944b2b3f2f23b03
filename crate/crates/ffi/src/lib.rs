//! C interface to `dirac-thermo`.
//!
//! Scenarios and runs are opaque handles created and destroyed through this
//! API. Every fallible call returns a [`DtStatus`]; the message for the most
//! recent failure on the calling thread is available from
//! [`dt_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dirac_thermo::cli::simulate::invariant_table;
use dirac_thermo::cli::{compare_methods, run_scenario, CliError, Method, RunOutput, ScenarioConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Inadmissible = 4,
    Solver = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// A validated scenario configuration.
pub struct DtScenario {
    config: ScenarioConfig,
}

/// The trajectory table and summary of a finished run.
pub struct DtRun {
    output: RunOutput,
    names: Vec<CString>,
    summary: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: DtStatus, msg: &str) -> DtStatus {
    set_error(msg);
    status
}

fn from_cli(e: CliError) -> DtStatus {
    let status = match e {
        CliError::Config(_) | CliError::Usage(_) => DtStatus::Config,
        CliError::Inadmissible(_) => DtStatus::Inadmissible,
        CliError::Solver(_) => DtStatus::Solver,
        CliError::Io(_) => DtStatus::Io,
    };
    fail(status, &e.to_string())
}

fn guard(f: impl FnOnce() -> DtStatus) -> DtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(DtStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, DtStatus> {
    if s.is_null() {
        return Err(fail(DtStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(DtStatus::InvalidUtf8, &format!("{what} is not UTF-8")))
}

/// Message describing the last failure on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a JSON scenario. On success `*out` owns a new
/// handle to be released with [`dt_scenario_free`].
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dt_scenario_from_json(json: *const c_char, out: *mut *mut DtScenario) -> DtStatus {
    guard(|| {
        if out.is_null() {
            return fail(DtStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let json = match text(json, "json") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match ScenarioConfig::from_json(json) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(DtScenario { config }));
                DtStatus::Ok
            }
            Err(e) => from_cli(e),
        }
    })
}

/// # Safety
/// `scenario` must be null or a handle from [`dt_scenario_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dt_scenario_free(scenario: *mut DtScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Replaces the integration method (`pontryagin`, `lagrange-dirac`,
/// `hamilton-dirac` or `reduced`).
///
/// # Safety
/// `scenario` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dt_scenario_set_method(scenario: *mut DtScenario, name: *const c_char) -> DtStatus {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(DtStatus::NullPointer, "scenario is null");
        };
        let name = match text(name, "name") {
            Ok(n) => n,
            Err(st) => return st,
        };
        match name.parse::<Method>() {
            Ok(m) => {
                s.config.integrator.formulation = m;
                DtStatus::Ok
            }
            Err(e) => fail(DtStatus::Config, &e),
        }
    })
}

/// Integrates the scenario. On success `*out` owns a new run handle to be
/// released with [`dt_run_free`].
///
/// # Safety
/// `scenario` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dt_run(scenario: *const DtScenario, out: *mut *mut DtRun) -> DtStatus {
    guard(|| {
        if out.is_null() {
            return fail(DtStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(s) = scenario.as_ref() else {
            return fail(DtStatus::NullPointer, "scenario is null");
        };
        match run_scenario(&s.config, &s.config.tolerances) {
            Ok(output) => {
                let names = output.table.header.iter().map(|h| CString::new(h.as_str()).unwrap_or_default()).collect();
                let summary = CString::new(output.summary.render()).unwrap_or_default();
                *out = Box::into_raw(Box::new(DtRun { output, names, summary }));
                DtStatus::Ok
            }
            Err(e) => from_cli(e),
        }
    })
}

/// # Safety
/// `run` must be null or a handle from [`dt_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dt_run_free(run: *mut DtRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of trajectory rows (nodes), or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_run_rows(run: *const DtRun) -> usize {
    run.as_ref().map_or(0, |r| r.output.table.rows.len())
}

/// Number of trajectory columns, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_run_columns(run: *const DtRun) -> usize {
    run.as_ref().map_or(0, |r| r.output.table.header.len())
}

/// Header of column `col` including its unit, owned by the run; null if out
/// of range.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_run_column_name(run: *const DtRun, col: usize) -> *const c_char {
    run.as_ref().and_then(|r| r.names.get(col)).map_or(ptr::null(), |c| c.as_ptr())
}

/// Stores the cell at (`row`, `col`) in `*value`; empty cells read as NaN.
///
/// # Safety
/// `run` must be a live handle and `value` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dt_run_value(run: *const DtRun, row: usize, col: usize, value: *mut f64) -> DtStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), value.is_null()) else {
            return fail(DtStatus::NullPointer, "run or value is null");
        };
        match r.output.table.rows.get(row).and_then(|cells| cells.get(col)) {
            Some(cell) => {
                *value = cell.unwrap_or(f64::NAN);
                DtStatus::Ok
            }
            None => fail(DtStatus::OutOfRange, &format!("cell ({row}, {col}) is outside the table")),
        }
    })
}

/// Copies the column whose name (unit suffix optional) is `name` into
/// `buffer`, which must hold [`dt_run_rows`] values.
///
/// # Safety
/// `run` must be a live handle, `name` a NUL-terminated string and `buffer`
/// writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dt_run_column(run: *const DtRun, name: *const c_char, buffer: *mut f64, len: usize) -> DtStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), buffer.is_null()) else {
            return fail(DtStatus::NullPointer, "run or buffer is null");
        };
        let name = match text(name, "name") {
            Ok(n) => n,
            Err(st) => return st,
        };
        let Some(col) = r.output.table.column(name) else {
            return fail(DtStatus::OutOfRange, &format!("no column named '{name}'"));
        };
        if len < col.len() {
            return fail(DtStatus::OutOfRange, &format!("buffer holds {len} values, column has {}", col.len()));
        }
        let dst = std::slice::from_raw_parts_mut(buffer, col.len());
        for (d, c) in dst.iter_mut().zip(&col) {
            *d = c.unwrap_or(f64::NAN);
        }
        DtStatus::Ok
    })
}

/// 1 if every monitored tolerance was met, 0 otherwise or for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_run_passed(run: *const DtRun) -> i32 {
    run.as_ref().map_or(0, |r| r.output.summary.passed() as i32)
}

/// Plain-text summary owned by the run; null for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_run_summary(run: *const DtRun) -> *const c_char {
    run.as_ref().map_or(ptr::null(), |r| r.summary.as_ptr())
}

/// Writes `trajectory.csv`, `invariants.csv` and `summary.txt` into `dir`,
/// creating it if needed.
///
/// # Safety
/// `run` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn dt_run_write(run: *const DtRun, dir: *const c_char) -> DtStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(DtStatus::NullPointer, "run is null");
        };
        let dir = match text(dir, "dir") {
            Ok(d) => Path::new(d),
            Err(st) => return st,
        };
        let result = std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
            .and_then(|_| r.output.table.write_csv(&dir.join("trajectory.csv")))
            .and_then(|_| invariant_table(&r.output.reports).write_csv(&dir.join("invariants.csv")))
            .and_then(|_| std::fs::write(dir.join("summary.txt"), r.output.summary.render()).map_err(|e| CliError::Io(e.to_string())));
        match result {
            Ok(()) => DtStatus::Ok,
            Err(e) => from_cli(e),
        }
    })
}

/// Integrates the scenario with each comma-separated method in `methods` and
/// stores the largest node divergence from the first in `*max_divergence`.
///
/// # Safety
/// `scenario` must be a live handle, `methods` a NUL-terminated string and
/// `max_divergence` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dt_compare(scenario: *const DtScenario, methods: *const c_char, max_divergence: *mut f64) -> DtStatus {
    guard(|| {
        let (Some(s), false) = (scenario.as_ref(), max_divergence.is_null()) else {
            return fail(DtStatus::NullPointer, "scenario or max_divergence is null");
        };
        let list = match text(methods, "methods") {
            Ok(m) => m,
            Err(st) => return st,
        };
        let parsed: Result<Vec<Method>, String> = list.split(',').map(str::parse).collect();
        let methods = match parsed {
            Ok(m) => m,
            Err(e) => return fail(DtStatus::Config, &e),
        };
        match compare_methods(&s.config, &methods, s.config.tolerances.compare) {
            Ok(rep) => {
                *max_divergence = rep.max_divergence();
                DtStatus::Ok
            }
            Err(e) => from_cli(e),
        }
    })
}
