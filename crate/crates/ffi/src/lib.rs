//! C ABI over the lsor harness.
//!
//! Scenarios and trajectories are opaque handles owned by the caller and
//! released with their `_free` function. Every fallible call returns an
//! [`LsorStatus`]; on failure [`lsor_last_error`] describes the cause.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lsor::harness::{self, ExportFormat, ModelKind, SagParams, ScenarioConfig, SimOutput, Variant};
use lsor::spt::{ReductionDecision, Verdict};
use lsor::Error;
use serde_json::Value;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsorStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsorVerdict {
    QssOnly = 0,
    QssPlusBoundaryLayer = 1,
    Repartition = 2,
}

/// Outcome of the reduction assessment. `eps_double_star` is NaN when no
/// bound exists for the required settle time.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsorDecision {
    pub verdict: LsorVerdict,
    pub epsilon: f64,
    pub eps_star: f64,
    pub eps_double_star: f64,
    pub settle_time: f64,
    pub t_required: f64,
}

/// Summary of a full-versus-reduced comparison run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsorComparison {
    pub mse_p: f64,
    pub mse_q: f64,
    pub timing_full: f64,
    pub timing_reduced: f64,
    pub speedup: f64,
    pub steps_full: usize,
    pub steps_reduced: usize,
    pub qss_max_residual: f64,
    pub decision: LsorDecision,
}

/// Opaque scenario handle.
pub struct LsorScenario {
    cfg: ScenarioConfig,
}

/// Opaque handle to a sampled trajectory.
pub struct LsorTrajectory {
    out: SimOutput,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: LsorStatus,
    message: String,
}

impl Failure {
    fn new(status: LsorStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Self::new(LsorStatus::NullPointer, format!("{what} is null"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = if e.is_numerical() {
            LsorStatus::Numerical
        } else {
            match e.root() {
                Error::Io { .. } | Error::Csv(_) => LsorStatus::Io,
                Error::Domain { .. } | Error::InvalidParameter(_) | Error::InsufficientData { .. } => {
                    LsorStatus::InvalidArgument
                }
                _ => LsorStatus::Config,
            }
        };
        Self::new(status, e.to_string())
    }
}

fn set_last_error(message: Option<String>) {
    let c = message.map(|m| CString::new(m.replace('\0', " ")).unwrap_or_default());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

/// Run `f`, record its error message and convert panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LsorStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(None);
            LsorStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(Some(fail.message));
            fail.status
        }
        Err(_) => {
            set_last_error(Some("internal panic".into()));
            LsorStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(LsorStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn scenario_ref<'a>(s: *const LsorScenario) -> Result<&'a LsorScenario, Failure> {
    s.as_ref().ok_or_else(|| Failure::null("scenario"))
}

unsafe fn trajectory_ref<'a>(t: *const LsorTrajectory) -> Result<&'a LsorTrajectory, Failure> {
    t.as_ref().ok_or_else(|| Failure::null("trajectory"))
}

fn decision(d: &ReductionDecision) -> LsorDecision {
    LsorDecision {
        verdict: match d.verdict {
            Verdict::QssOnly => LsorVerdict::QssOnly,
            Verdict::QssPlusBoundaryLayer => LsorVerdict::QssPlusBoundaryLayer,
            Verdict::Repartition => LsorVerdict::Repartition,
        },
        epsilon: d.epsilon,
        eps_star: d.eps_star,
        eps_double_star: d.eps_double_star.unwrap_or(f64::NAN),
        settle_time: d.settle_time_t,
        t_required: d.t_required,
    }
}

fn parse_variant(name: &str) -> Result<Variant, Failure> {
    match name {
        "full" => Ok(Variant::Full),
        "reduced" => Ok(Variant::Reduced),
        other => Err(Failure::new(
            LsorStatus::InvalidArgument,
            format!("unknown variant '{other}' (expected full or reduced)"),
        )),
    }
}

fn apply(s: &mut LsorScenario, key: &str, value: Value) -> Result<(), Failure> {
    let overrides = BTreeMap::from([(key.to_string(), value)]);
    s.cfg = harness::apply_overrides(&s.cfg, &overrides)?;
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lsor_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lsor_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Bus voltage of the sag benchmark; NaN for invalid sag parameters.
#[no_mangle]
pub extern "C" fn lsor_sag_voltage(t: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    let sp = SagParams { a, b, c, d };
    if sp.validate().is_err() {
        return f64::NAN;
    }
    harness::sag_voltage(t, &sp)
}

/// Create a scenario with defaults for `model` (`motor-a`, `motor-b`,
/// `motor-c` or `dera`).
///
/// # Safety
/// `model` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lsor_scenario_new(model: *const c_char, out: *mut *mut LsorScenario) -> LsorStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = ptr::null_mut();
        let kind: ModelKind = read_str(model, "model")?.parse()?;
        *out = Box::into_raw(Box::new(LsorScenario {
            cfg: ScenarioConfig::new(kind),
        }));
        Ok(())
    })
}

/// Release a scenario. Null is ignored.
///
/// # Safety
/// `s` must come from [`lsor_scenario_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lsor_scenario_free(s: *mut LsorScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Set a numeric setting by dotted key, e.g. `sag.a` or `solver.rel_tol`.
///
/// # Safety
/// `s` must be a live scenario and `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lsor_scenario_set_number(s: *mut LsorScenario, key: *const c_char, value: f64) -> LsorStatus {
    guard(|| {
        let s = s.as_mut().ok_or_else(|| Failure::null("scenario"))?;
        let key = read_str(key, "key")?;
        let v = serde_json::Number::from_f64(value)
            .map(Value::Number)
            .ok_or_else(|| Failure::new(LsorStatus::InvalidArgument, format!("{key}: value must be finite")))?;
        apply(s, key, v)
    })
}

/// Set a string setting by dotted key, e.g. `model` or `solver.method`.
///
/// # Safety
/// `s` must be a live scenario; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn lsor_scenario_set_string(
    s: *mut LsorScenario,
    key: *const c_char,
    value: *const c_char,
) -> LsorStatus {
    guard(|| {
        let s = s.as_mut().ok_or_else(|| Failure::null("scenario"))?;
        let key = read_str(key, "key")?;
        let value = read_str(value, "value")?;
        apply(s, key, Value::from(value))
    })
}

/// Apply the overrides of a flat JSON configuration file.
///
/// # Safety
/// `s` must be a live scenario and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lsor_scenario_load(s: *mut LsorScenario, path: *const c_char) -> LsorStatus {
    guard(|| {
        let s = s.as_mut().ok_or_else(|| Failure::null("scenario"))?;
        let overrides = harness::load_config_file(Path::new(read_str(path, "path")?))?;
        s.cfg = harness::apply_overrides(&s.cfg, &overrides)?;
        Ok(())
    })
}

/// Assess whether the scenario's model admits reduction.
///
/// # Safety
/// `s` must be a live scenario and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lsor_assess(s: *const LsorScenario, out: *mut LsorDecision) -> LsorStatus {
    guard(|| {
        let s = scenario_ref(s)?;
        let out = out.as_mut().ok_or_else(|| Failure::null("out"))?;
        *out = decision(&harness::assess_model(&s.cfg)?);
        Ok(())
    })
}

/// Run full and reduced models and summarize their differences.
///
/// # Safety
/// `s` must be a live scenario and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lsor_compare(s: *const LsorScenario, out: *mut LsorComparison) -> LsorStatus {
    guard(|| {
        let s = scenario_ref(s)?;
        let out = out.as_mut().ok_or_else(|| Failure::null("out"))?;
        let r = harness::run_comparison(&s.cfg)?.report;
        *out = LsorComparison {
            mse_p: r.mse_p,
            mse_q: r.mse_q,
            timing_full: r.timing_full,
            timing_reduced: r.timing_reduced,
            speedup: r.speedup,
            steps_full: r.stats_full.steps_accepted,
            steps_reduced: r.stats_reduced.steps_accepted,
            qss_max_residual: r.qss_max_residual,
            decision: decision(&r.decision),
        };
        Ok(())
    })
}

/// Integrate one variant (`full` or `reduced`) and return its sampled
/// trajectory.
///
/// # Safety
/// `s` must be a live scenario, `variant` a NUL-terminated string and `out`
/// a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lsor_simulate(
    s: *const LsorScenario,
    variant: *const c_char,
    out: *mut *mut LsorTrajectory,
) -> LsorStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = ptr::null_mut();
        let s = scenario_ref(s)?;
        let variant = parse_variant(read_str(variant, "variant")?)?;
        let (sim, _) = harness::simulate(&s.cfg, variant)?;
        let names = sim
            .names
            .iter()
            .map(|n| CString::new(n.as_str()).unwrap_or_default())
            .collect();
        *out = Box::into_raw(Box::new(LsorTrajectory { out: sim, names }));
        Ok(())
    })
}

/// Release a trajectory. Null is ignored.
///
/// # Safety
/// `t` must come from [`lsor_simulate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lsor_trajectory_free(t: *mut LsorTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of samples; 0 for null.
///
/// # Safety
/// `t` must be null or a live trajectory.
#[no_mangle]
pub unsafe extern "C" fn lsor_trajectory_len(t: *const LsorTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.out.times.len())
}

/// Number of columns (states then outputs); 0 for null.
///
/// # Safety
/// `t` must be null or a live trajectory.
#[no_mangle]
pub unsafe extern "C" fn lsor_trajectory_column_count(t: *const LsorTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.names.len())
}

/// Name of column `index`, or null when out of range. Owned by the handle.
///
/// # Safety
/// `t` must be null or a live trajectory.
#[no_mangle]
pub unsafe extern "C" fn lsor_trajectory_column_name(t: *const LsorTrajectory, index: usize) -> *const c_char {
    t.as_ref()
        .and_then(|t| t.names.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, cap: usize) -> Result<(), Failure> {
    if buf.is_null() {
        return Err(Failure::null("buffer"));
    }
    if cap < src.len() {
        return Err(Failure::new(
            LsorStatus::InvalidArgument,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copy the sample times into `buf` of capacity `cap`.
///
/// # Safety
/// `t` must be a live trajectory and `buf` writable for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn lsor_trajectory_times(t: *const LsorTrajectory, buf: *mut f64, cap: usize) -> LsorStatus {
    guard(|| copy_out(&trajectory_ref(t)?.out.times, buf, cap))
}

/// Copy column `index` into `buf` of capacity `cap`.
///
/// # Safety
/// `t` must be a live trajectory and `buf` writable for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn lsor_trajectory_column(
    t: *const LsorTrajectory,
    index: usize,
    buf: *mut f64,
    cap: usize,
) -> LsorStatus {
    guard(|| {
        let t = trajectory_ref(t)?;
        let col = t.out.columns.get(index).ok_or_else(|| {
            Failure::new(
                LsorStatus::InvalidArgument,
                format!("column {index} out of range ({} columns)", t.names.len()),
            )
        })?;
        copy_out(col, buf, cap)
    })
}

/// Write the trajectory to `path` as `csv` or `json`.
///
/// # Safety
/// `t` must be a live trajectory; `path` and `format` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn lsor_trajectory_export(
    t: *const LsorTrajectory,
    path: *const c_char,
    format: *const c_char,
) -> LsorStatus {
    guard(|| {
        let t = trajectory_ref(t)?;
        let format: ExportFormat = read_str(format, "format")?.parse()?;
        harness::export_trajectory(&t.out, None, Path::new(read_str(path, "path")?), format)?;
        Ok(())
    })
}
