//! C ABI over the simulator.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free`. Every fallible call returns an [`MgStatus`]; on
//! failure [`mg_last_error`] describes it. Error text is per thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use microgrid_svc::control::ControllerKind;
use microgrid_svc::sim::{self, DgSample, RunOutput, Scenario, ScenarioFile};
use microgrid_svc::Error;

/// Outcome of an API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    /// The run diverged; the handle still holds the partial trace.
    Blowup = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgController {
    Ftsm = 0,
    Baseline = 1,
}

/// Per-DG trace column.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgSignal {
    VOd = 0,
    VOq = 1,
    ActivePower = 2,
    ReactivePower = 3,
    DroopInput = 4,
    Surface = 5,
    EstimateVoltage = 6,
    EstimateDerivative = 7,
    EstimateDrift = 8,
    TrueDerivative = 9,
    TrueDrift = 10,
}

/// Summary of one inter-event window.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MgWindow {
    pub start: f64,
    pub end: f64,
    /// Zero when the window is too short for statistics.
    pub available: u8,
    /// Zero when the voltages never settle; `settling` is then NaN.
    pub settled: u8,
    pub settling: f64,
    pub max_mean_error: f64,
    pub max_peak_error: f64,
    pub max_std: f64,
    pub dispersion_rel: f64,
}

/// Editable scenario document.
pub struct MgScenario {
    file: ScenarioFile,
}

/// Result of one simulation.
pub struct MgRun {
    scenario: Scenario,
    output: RunOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn fail(status: MgStatus, msg: impl Into<String>) -> MgStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> MgStatus {
    let status = match &e {
        Error::Io { .. } | Error::Csv(_) => MgStatus::Io,
        Error::Numerical(_) => MgStatus::Blowup,
        Error::Graph(_) | Error::Config(_) => MgStatus::Config,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> MgStatus) -> MgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(MgStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, MgStatus> {
    if p.is_null() {
        return Err(fail(MgStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(MgStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, MgStatus> {
    p.as_ref().ok_or_else(|| fail(MgStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, MgStatus> {
    p.as_mut().ok_or_else(|| fail(MgStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, MgStatus> {
    p.as_mut().ok_or_else(|| fail(MgStatus::NullPointer, "output pointer is null"))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failed call on this thread; empty when none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn mg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn new_scenario(file: ScenarioFile, out: &mut *mut MgScenario) -> MgStatus {
    if let Err(e) = file.build() {
        return from_error(e);
    }
    *out = Box::into_raw(Box::new(MgScenario { file }));
    MgStatus::Ok
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mg_scenario_load(path: *const c_char, out: *mut *mut MgScenario) -> MgStatus {
    guard(|| {
        let path = tri!(str_arg(path, "path"));
        let out = tri!(out_arg(out));
        match ScenarioFile::load(Path::new(path)) {
            Ok(f) => new_scenario(f, out),
            Err(e) => from_error(e),
        }
    })
}

/// Parses and validates a scenario document.
///
/// # Safety
/// `text` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mg_scenario_parse(text: *const c_char, out: *mut *mut MgScenario) -> MgStatus {
    guard(|| {
        let text = tri!(str_arg(text, "text"));
        let out = tri!(out_arg(out));
        match ScenarioFile::parse(text) {
            Ok(f) => new_scenario(f, out),
            Err(e) => from_error(e.into()),
        }
    })
}

/// Shipped scenario: `reference`, `tradeoff` or `chain<N>` with N >= 2.
///
/// # Safety
/// `name` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mg_scenario_builtin(name: *const c_char, out: *mut *mut MgScenario) -> MgStatus {
    guard(|| {
        let name = tri!(str_arg(name, "name"));
        let out = tri!(out_arg(out));
        let file = match name {
            "reference" => ScenarioFile::reference(),
            "tradeoff" => ScenarioFile::tradeoff(),
            other => match other.strip_prefix("chain").and_then(|n| n.parse::<usize>().ok()) {
                Some(n) if n >= 2 => ScenarioFile::chain(n),
                _ => return fail(MgStatus::Config, format!("unknown built-in scenario `{other}`")),
            },
        };
        new_scenario(file, out)
    })
}

/// # Safety
/// `scenario` comes from a `mg_scenario_*` constructor and is freed once.
#[no_mangle]
pub unsafe extern "C" fn mg_scenario_free(scenario: *mut MgScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Applies `edit` and keeps it only if the scenario still validates.
unsafe fn edit(scenario: *mut MgScenario, edit: impl FnOnce(&mut ScenarioFile)) -> MgStatus {
    guard(|| {
        let s = tri!(handle_mut(scenario, "scenario"));
        let mut file = s.file.clone();
        edit(&mut file);
        match file.build() {
            Ok(_) => {
                s.file = file;
                MgStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `scenario` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_scenario_set_seed(scenario: *mut MgScenario, seed: u64) -> MgStatus {
    edit(scenario, |f| f.simulation.seed = seed)
}

/// Measurement noise variance (V^2).
///
/// # Safety
/// `scenario` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_scenario_set_noise_variance(scenario: *mut MgScenario, variance: f64) -> MgStatus {
    edit(scenario, |f| f.noise.variance = variance)
}

/// Enables (non-zero) or bypasses the state observer.
///
/// # Safety
/// `scenario` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_scenario_set_observer(scenario: *mut MgScenario, enabled: u8) -> MgStatus {
    edit(scenario, |f| f.observer.enabled = enabled != 0)
}

/// # Safety
/// `scenario` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_scenario_set_controller(scenario: *mut MgScenario, kind: MgController) -> MgStatus {
    edit(scenario, |f| {
        f.controller.kind = match kind {
            MgController::Ftsm => ControllerKind::Ftsm,
            MgController::Baseline => ControllerKind::Baseline,
        }
    })
}

/// Shortens or extends the run; events past the new end are dropped.
///
/// # Safety
/// `scenario` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_scenario_set_duration(scenario: *mut MgScenario, seconds: f64) -> MgStatus {
    edit(scenario, |f| {
        f.simulation.duration = seconds;
        f.events.retain(|e| e.time <= seconds);
    })
}

/// # Safety
/// `scenario` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mg_scenario_dg_count(scenario: *const MgScenario, out: *mut usize) -> MgStatus {
    guard(|| {
        let s = tri!(handle(scenario, "scenario"));
        *tri!(out_arg(out)) = s.file.dgs.len();
        MgStatus::Ok
    })
}

/// Simulates the scenario. On [`MgStatus::Blowup`] `out` still receives a
/// handle holding the trace up to the failure.
///
/// # Safety
/// `scenario` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mg_run(scenario: *const MgScenario, out: *mut *mut MgRun) -> MgStatus {
    guard(|| {
        let s = tri!(handle(scenario, "scenario"));
        let out = tri!(out_arg(out));
        let sc = match s.file.build() {
            Ok(sc) => sc,
            Err(e) => return from_error(e),
        };
        let output = match sim::run(&sc) {
            Ok(o) => o,
            Err(e) => return from_error(e),
        };
        let status = match &output.blowup {
            Some(e) => fail(MgStatus::Blowup, e.to_string()),
            None => MgStatus::Ok,
        };
        *out = Box::into_raw(Box::new(MgRun { scenario: sc, output }));
        status
    })
}

/// # Safety
/// `run` comes from [`mg_run`] and is freed once.
#[no_mangle]
pub unsafe extern "C" fn mg_run_free(run: *mut MgRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `run` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mg_run_record_count(run: *const MgRun, out: *mut usize) -> MgStatus {
    guard(|| {
        let r = tri!(handle(run, "run"));
        *tri!(out_arg(out)) = r.output.trace.records.len();
        MgStatus::Ok
    })
}

/// Copies the sample times into `buf`, which holds `len` values.
///
/// # Safety
/// `run` is a live handle; `buf` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mg_run_copy_time(run: *const MgRun, buf: *mut f64, len: usize) -> MgStatus {
    guard(|| {
        let r = tri!(handle(run, "run"));
        let recs = &r.output.trace.records;
        if buf.is_null() {
            return fail(MgStatus::NullPointer, "buffer is null");
        }
        if len < recs.len() {
            return fail(MgStatus::OutOfRange, format!("buffer holds {len} values, {} needed", recs.len()));
        }
        let dst = std::slice::from_raw_parts_mut(buf, recs.len());
        for (d, r) in dst.iter_mut().zip(recs) {
            *d = r.t;
        }
        MgStatus::Ok
    })
}

fn signal(s: MgSignal) -> fn(&DgSample) -> f64 {
    match s {
        MgSignal::VOd => |d| d.v_od,
        MgSignal::VOq => |d| d.v_oq,
        MgSignal::ActivePower => |d| d.p,
        MgSignal::ReactivePower => |d| d.q,
        MgSignal::DroopInput => |d| d.v_n,
        MgSignal::Surface => |d| d.s,
        MgSignal::EstimateVoltage => |d| d.x_hat[0],
        MgSignal::EstimateDerivative => |d| d.x_hat[1],
        MgSignal::EstimateDrift => |d| d.x_hat[2],
        MgSignal::TrueDerivative => |d| d.vdot_true,
        MgSignal::TrueDrift => |d| d.xi_true,
    }
}

/// Copies one signal of DG `dg` into `buf`, which holds `len` values.
///
/// # Safety
/// `run` is a live handle; `buf` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mg_run_copy_signal(
    run: *const MgRun,
    dg: usize,
    which: MgSignal,
    buf: *mut f64,
    len: usize,
) -> MgStatus {
    guard(|| {
        let r = tri!(handle(run, "run"));
        let recs = &r.output.trace.records;
        let n = r.output.trace.dg_names.len();
        if dg >= n {
            return fail(MgStatus::OutOfRange, format!("DG index {dg} out of range for {n} DGs"));
        }
        if buf.is_null() {
            return fail(MgStatus::NullPointer, "buffer is null");
        }
        if len < recs.len() {
            return fail(MgStatus::OutOfRange, format!("buffer holds {len} values, {} needed", recs.len()));
        }
        let get = signal(which);
        let dst = std::slice::from_raw_parts_mut(buf, recs.len());
        for (d, r) in dst.iter_mut().zip(recs) {
            *d = get(&r.dgs[dg]);
        }
        MgStatus::Ok
    })
}

/// # Safety
/// `run` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mg_run_window_count(run: *const MgRun, out: *mut usize) -> MgStatus {
    guard(|| {
        let r = tri!(handle(run, "run"));
        *tri!(out_arg(out)) = r.output.metrics.windows.len();
        MgStatus::Ok
    })
}

/// # Safety
/// `run` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mg_run_window(run: *const MgRun, index: usize, out: *mut MgWindow) -> MgStatus {
    guard(|| {
        let r = tri!(handle(run, "run"));
        let out = tri!(out_arg(out));
        let ws = &r.output.metrics.windows;
        let Some(w) = ws.get(index) else {
            return fail(MgStatus::OutOfRange, format!("window {index} out of range for {}", ws.len()));
        };
        *out = MgWindow {
            start: w.start,
            end: w.end,
            available: w.available as u8,
            settled: w.settling.is_some() as u8,
            settling: w.settling.unwrap_or(f64::NAN),
            max_mean_error: w.max_mean_error(),
            max_peak_error: w.max_peak_error(),
            max_std: w.max_std(),
            dispersion_rel: w.dispersion_rel,
        };
        MgStatus::Ok
    })
}

/// Number of steady-state property violations (settling within 0.5 s and
/// the 1 V band in voltage mode, 2% sharing dispersion in trade-off mode).
///
/// # Safety
/// `run` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mg_run_check(run: *const MgRun, out: *mut usize) -> MgStatus {
    guard(|| {
        let r = tri!(handle(run, "run"));
        let out = tri!(out_arg(out));
        let v = sim::check_properties(&r.output.metrics, &r.scenario, 0.5, 0.02);
        if let Some(first) = v.first() {
            set_error(first.clone());
        }
        *out = v.len();
        MgStatus::Ok
    })
}

/// Writes the full trace as CSV.
///
/// # Safety
/// `run` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mg_run_write_csv(run: *const MgRun, path: *const c_char) -> MgStatus {
    guard(|| {
        let r = tri!(handle(run, "run"));
        let path = tri!(str_arg(path, "path"));
        match r.output.trace.export_csv(path) {
            Ok(()) => MgStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}
