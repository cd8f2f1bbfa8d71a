//! C ABI over `smib_observer`.
//!
//! Every fallible function returns a [`SmibStatus`]; on failure the message is
//! available from [`smib_last_error`] on the same thread. Scenarios and
//! trajectories are opaque handles owned by the caller and released with
//! their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use smib_observer::config::{parse_config, preset};
use smib_observer::drem::{mix, ExtendedRegression};
use smib_observer::output::column;
use smib_observer::pmu::{measure, noninjectivity_certificate};
use smib_observer::sim::{run_scenario, Scenario, Trajectory};
use smib_observer::{Error, PlantState};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmibStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    InvalidParameters = 4,
    LossOfObservability = 5,
    IntegrationDiverged = 6,
    UnknownColumn = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// A validated simulation scenario.
pub struct SmibScenario(Scenario);

/// A completed run.
pub struct SmibTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(text).expect("nul bytes removed")));
}

fn fail(status: SmibStatus, msg: impl Into<String>) -> SmibStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> SmibStatus {
    let status = match &e {
        Error::ConfigParse { .. } | Error::ConfigValidation { .. } | Error::MissingKeys(_) | Error::Io { .. } => {
            SmibStatus::ConfigError
        }
        Error::LossOfObservability { .. } => SmibStatus::LossOfObservability,
        Error::IntegrationDiverged { .. } => SmibStatus::IntegrationDiverged,
        _ => SmibStatus::InvalidParameters,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> SmibStatus) -> SmibStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SmibStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, SmibStatus> {
    if p.is_null() {
        return Err(fail(SmibStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SmibStatus::InvalidUtf8, "string argument is not UTF-8"))
}

macro_rules! check_null {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            return fail(SmibStatus::NullPointer, concat!("null pointer: ", stringify!($p)));
        })+
    };
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into this library on the same thread.
#[no_mangle]
pub extern "C" fn smib_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn smib_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn store_scenario(cfg_text: &str, out: *mut *mut SmibScenario) -> SmibStatus {
    match parse_config(cfg_text) {
        Ok(cfg) => {
            unsafe { *out = Box::into_raw(Box::new(SmibScenario(cfg.scenario))) };
            SmibStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Builds a scenario from TOML config text.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smib_scenario_from_config(config: *const c_char, out: *mut *mut SmibScenario) -> SmibStatus {
    guard(|| {
        check_null!(out);
        match text(config) {
            Ok(t) => store_scenario(t, out),
            Err(s) => s,
        }
    })
}

/// Builds a scenario from a shipped preset name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smib_scenario_from_preset(name: *const c_char, out: *mut *mut SmibScenario) -> SmibStatus {
    guard(|| {
        check_null!(out);
        let name = match text(name) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match preset(name) {
            Some(t) => store_scenario(t, out),
            None => fail(SmibStatus::ConfigError, format!("no preset named `{name}`")),
        }
    })
}

/// Overrides the integration horizon in seconds.
///
/// # Safety
/// `scenario` must come from a `smib_scenario_from_*` call.
#[no_mangle]
pub unsafe extern "C" fn smib_scenario_set_horizon(scenario: *mut SmibScenario, horizon: f64) -> SmibStatus {
    guard(|| {
        check_null!(scenario);
        let s = &mut (*scenario).0;
        let mut next = s.clone();
        next.horizon = horizon;
        match next.validate() {
            Ok(()) => {
                *s = next;
                SmibStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `scenario` must come from a `smib_scenario_from_*` call, or be null.
#[no_mangle]
pub unsafe extern "C" fn smib_scenario_free(scenario: *mut SmibScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Integrates a scenario.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smib_run(scenario: *const SmibScenario, out: *mut *mut SmibTrajectory) -> SmibStatus {
    guard(|| {
        check_null!(scenario, out);
        match run_scenario(&(*scenario).0) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(SmibTrajectory(t)));
                SmibStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of records in a trajectory.
///
/// # Safety
/// `traj` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smib_trajectory_len(traj: *const SmibTrajectory, out: *mut usize) -> SmibStatus {
    guard(|| {
        check_null!(traj, out);
        *out = (*traj).0.records.len();
        SmibStatus::Ok
    })
}

/// Value of a named CSV column at record `index`. `NaN` when the column does
/// not apply to the run.
///
/// # Safety
/// `traj` must be a live handle, `name` a NUL-terminated string and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smib_trajectory_value(
    traj: *const SmibTrajectory,
    name: *const c_char,
    index: usize,
    out: *mut f64,
) -> SmibStatus {
    guard(|| {
        check_null!(traj, out);
        let name = match text(name) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let Some(col) = column(name) else {
            return fail(SmibStatus::UnknownColumn, format!("unknown column `{name}`"));
        };
        let records = &(*traj).0.records;
        match records.get(index) {
            Some(r) => {
                *out = (col.get)(r);
                SmibStatus::Ok
            }
            None => fail(SmibStatus::OutOfRange, format!("index {index} beyond {} records", records.len())),
        }
    })
}

/// Copies a whole named column into `buf`, which must hold `len` values with
/// `len` equal to the record count.
///
/// # Safety
/// `traj` must be a live handle, `name` a NUL-terminated string and `buf`
/// valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn smib_trajectory_column(
    traj: *const SmibTrajectory,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
) -> SmibStatus {
    guard(|| {
        check_null!(traj, buf);
        let name = match text(name) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let Some(col) = column(name) else {
            return fail(SmibStatus::UnknownColumn, format!("unknown column `{name}`"));
        };
        let records = &(*traj).0.records;
        if len != records.len() {
            return fail(SmibStatus::OutOfRange, format!("buffer holds {len} values, trajectory has {}", records.len()));
        }
        let dst = std::slice::from_raw_parts_mut(buf, len);
        for (d, r) in dst.iter_mut().zip(records) {
            *d = (col.get)(r);
        }
        SmibStatus::Ok
    })
}

/// # Safety
/// `traj` must come from [`smib_run`], or be null.
#[no_mangle]
pub unsafe extern "C" fn smib_trajectory_free(traj: *mut SmibTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// PMU channels `(y1..y6)` for plant state `x` and bus signals.
///
/// # Safety
/// `x` must point to 4 values and `out` to room for 6.
#[no_mangle]
pub unsafe extern "C" fn smib_measure(x: *const f64, y1_bus: f64, y2_bus: f64, x_qp: f64, out: *mut f64) -> SmibStatus {
    guard(|| {
        check_null!(x, out);
        let state = PlantState::from_slice(std::slice::from_raw_parts(x, 4));
        match measure(&state, y1_bus, y2_bus, x_qp) {
            Ok(s) => {
                std::slice::from_raw_parts_mut(out, 6).copy_from_slice(&s.to_array());
                SmibStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Jacobian (row-major, 9 values) of the alternative output map at `v` and
/// the residual of its null direction `(1, -v3, v2)`.
///
/// # Safety
/// `v` must point to 3 values, `jacobian` to room for 9, `residual` valid.
#[no_mangle]
pub unsafe extern "C" fn smib_certificate(v: *const f64, y2: f64, jacobian: *mut f64, residual: *mut f64) -> SmibStatus {
    guard(|| {
        check_null!(v, jacobian, residual);
        let v = std::slice::from_raw_parts(v, 3);
        let c = noninjectivity_certificate([v[0], v[1], v[2]], y2);
        let dst = std::slice::from_raw_parts_mut(jacobian, 9);
        for (d, s) in dst.iter_mut().zip(c.jacobian.iter().flatten()) {
            *d = *s;
        }
        *residual = c.residual;
        SmibStatus::Ok
    })
}

/// Mixes an extended regression `y_e = psi theta`: writes `det(psi)` and
/// `adj(psi) y_e`. `psi` is row-major 5x5.
///
/// # Safety
/// `psi` must point to 25 values, `y_e` to 5, `delta` valid, `cal_y` to room for 5.
#[no_mangle]
pub unsafe extern "C" fn smib_mix(psi: *const f64, y_e: *const f64, delta: *mut f64, cal_y: *mut f64) -> SmibStatus {
    guard(|| {
        check_null!(psi, y_e, delta, cal_y);
        let p = std::slice::from_raw_parts(psi, 25);
        let y = std::slice::from_raw_parts(y_e, 5);
        let r = ExtendedRegression {
            y_e: std::array::from_fn(|i| y[i]),
            psi: std::array::from_fn(|i| std::array::from_fn(|j| p[5 * i + j])),
        };
        let m = mix(&r);
        *delta = m.delta;
        std::slice::from_raw_parts_mut(cal_y, 5).copy_from_slice(&m.cal_y);
        SmibStatus::Ok
    })
}
