//! C interface to the planner.
//!
//! Every fallible function returns an [`StsStatus`]; on failure the message is
//! available from [`sts_last_error`] on the same thread. Objects are opaque
//! handles released with their `_free` function; strings returned to the
//! caller are released with [`sts_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use stepstone::env::{generate_environment, Environment, GridConfig};
use stepstone::mcts::{plan, Models, PlanResult, SearchConfig};
use stepstone::nn::MlpModel;
use stepstone::oracle::{Controller, Gait, GaitSpec};
use stepstone::robot::RobotConfig;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    MissingModel = 5,
    Search = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StsGait {
    Trot = 0,
    Jump = 1,
}

/// Stepping-stone environment.
pub struct StsEnvironment(Environment);

/// Trained network (classifier or predictor/adjuster).
pub struct StsModel(MlpModel);

/// Outcome of one search.
pub struct StsPlanResult(PlanResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(StsStatus, String);

impl Fail {
    fn null(what: &str) -> Fail {
        Fail(StsStatus::NullPointer, format!("{what} is null"))
    }
}

/// Runs `f`, records any error or panic and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> StsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StsStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            StsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail::null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(StsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::null("out"));
    }
    let c = CString::new(s).map_err(|_| Fail(StsStatus::InvalidArgument, "string contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::null(what))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn sts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generates the seeded default grid with stones of side `side` meters.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn sts_environment_generate(seed: u64, side: f64, out: *mut *mut StsEnvironment) -> StsStatus {
    guard(|| {
        let env = generate_environment(seed, &GridConfig::default().with_side(side))
            .map_err(|e| Fail(StsStatus::InvalidArgument, e.to_string()))?;
        write_out(out, StsEnvironment(env))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sts_environment_load(path: *const c_char, out: *mut *mut StsEnvironment) -> StsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(|e| Fail(StsStatus::Io, format!("{path}: {e}")))?;
        let env = Environment::from_json(&text).map_err(|e| Fail(StsStatus::Parse, format!("{path}: {e}")))?;
        write_out(out, StsEnvironment(env))
    })
}

/// JSON form of the environment; free with [`sts_string_free`].
///
/// # Safety
/// `env` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sts_environment_to_json(env: *const StsEnvironment, out: *mut *mut c_char) -> StsStatus {
    guard(|| {
        let env = handle(env, "env")?;
        let json = env.0.to_json().map_err(|e| Fail(StsStatus::Parse, e.to_string()))?;
        write_string(out, json)
    })
}

/// Number of live stones, or 0 for a null handle.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sts_environment_stone_count(env: *const StsEnvironment) -> usize {
    env.as_ref().map_or(0, |e| e.0.stones().len())
}

/// # Safety
/// `env` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sts_environment_free(env: *mut StsEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sts_model_load(path: *const c_char, out: *mut *mut StsModel) -> StsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let model = MlpModel::load(Path::new(path)).map_err(|e| {
            let code = match e {
                stepstone::nn::NnError::Io(_) => StsStatus::Io,
                _ => StsStatus::Parse,
            };
            Fail(code, format!("{path}: {e}"))
        })?;
        write_out(out, StsModel(model))
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sts_model_free(model: *mut StsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Plans on `env`. `classifier` and `dynamics` may be null when the
/// configuration does not need them. `config_json` is null for the defaults
/// or a JSON object overriding any search setting.
///
/// # Safety
/// Handles must be null or live; `config_json` null or NUL-terminated; `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sts_plan(
    env: *const StsEnvironment,
    gait: StsGait,
    classifier: *const StsModel,
    dynamics: *const StsModel,
    config_json: *const c_char,
    out: *mut *mut StsPlanResult,
) -> StsStatus {
    guard(|| {
        let env = handle(env, "env")?;
        if out.is_null() {
            return Err(Fail::null("out"));
        }
        let config: SearchConfig = if config_json.is_null() {
            SearchConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)
                .map_err(|e| Fail(StsStatus::Parse, format!("config: {e}")))?
        };
        let gait = match gait {
            StsGait::Trot => Gait::Trot,
            StsGait::Jump => Gait::Jump,
        };
        let controller = Controller::new(GaitSpec::for_gait(gait), RobotConfig::default());
        let models = Models {
            classifier: classifier.as_ref().map(|m| &m.0),
            dynamics: dynamics.as_ref().map(|m| &m.0),
        };
        let result = plan(&env.0, &controller, models, &config).map_err(|e| {
            let code = match e {
                stepstone::mcts::SearchError::MissingModel { .. } => StsStatus::MissingModel,
                stepstone::mcts::SearchError::Config(_) => StsStatus::InvalidArgument,
                _ => StsStatus::Search,
            };
            Fail(code, e.to_string())
        })?;
        write_out(out, StsPlanResult(result))
    })
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sts_plan_success(result: *const StsPlanResult) -> bool {
    result.as_ref().is_some_and(|r| r.0.success)
}

/// Number of contact states in the plan, start included.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sts_plan_len(result: *const StsPlanResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.plan.len())
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sts_plan_oracle_calls(result: *const StsPlanResult) -> u64 {
    result.as_ref().map_or(0, |r| r.0.oracle_calls as u64)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sts_plan_iterations(result: *const StsPlanResult) -> u64 {
    result.as_ref().map_or(0, |r| r.0.iterations as u64)
}

/// Copies the stone ids of plan step `step` into `ids`, which holds `len`
/// entries; `len` must equal the number of effectors.
///
/// # Safety
/// `result` must be a live handle and `ids` point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn sts_plan_state(
    result: *const StsPlanResult,
    step: usize,
    ids: *mut u16,
    len: usize,
) -> StsStatus {
    guard(|| {
        let r = handle(result, "result")?;
        if ids.is_null() {
            return Err(Fail::null("ids"));
        }
        let s = r.0.plan.get(step).ok_or_else(|| {
            Fail(StsStatus::OutOfRange, format!("step {step} beyond plan of {}", r.0.plan.len()))
        })?;
        if s.n_effectors() != len {
            return Err(Fail(
                StsStatus::InvalidArgument,
                format!("buffer holds {len} ids, state has {}", s.n_effectors()),
            ));
        }
        for (i, id) in s.stones().iter().enumerate() {
            *ids.add(i) = id.0;
        }
        Ok(())
    })
}

/// JSON form of the result; free with [`sts_string_free`].
///
/// # Safety
/// `result` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sts_plan_to_json(result: *const StsPlanResult, out: *mut *mut c_char) -> StsStatus {
    guard(|| write_string(out, handle(result, "result")?.0.to_json()))
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sts_plan_free(result: *mut StsPlanResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
