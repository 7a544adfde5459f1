//! C interface to the planner.
//!
//! Scenarios and plans are opaque handles created and destroyed through this
//! API. Every fallible call returns an `RsfcStatus`; the numeric values match
//! the exit codes of the `rsfc` command line tool where they overlap. The
//! message of the most recent failure on the calling thread is available from
//! `rsfc_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rsfc::output::PlanDocument;
use rsfc::pipeline::{plan, ExitStatus, PlanFailure, PlanOptions, PlanOutcome};
use rsfc::scenario::{generate_forest_with, scenario_from_json, ForestParams, PlannerConfig, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsfcStatus {
    Ok = 0,
    /// The planner ran but found no verified trajectory.
    Unsolved = 2,
    InvalidInput = 3,
    Internal = 4,
    NullPointer = 5,
    /// Agent index or time out of range.
    OutOfRange = 6,
    Panic = 7,
}

impl From<ExitStatus> for RsfcStatus {
    fn from(e: ExitStatus) -> Self {
        match e {
            ExitStatus::Success => RsfcStatus::Ok,
            ExitStatus::Unsolved => RsfcStatus::Unsolved,
            ExitStatus::InvalidInput => RsfcStatus::InvalidInput,
            ExitStatus::Internal => RsfcStatus::Internal,
        }
    }
}

/// A validated map plus mission.
pub struct RsfcScenario {
    inner: Scenario,
}

/// Result of one planner run, successful or not.
pub struct RsfcPlan {
    result: Result<PlanOutcome, PlanFailure>,
    agents: Vec<rsfc::scenario::AgentSpec>,
    config: PlannerConfig,
    stage: CString,
    reason: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn fail(status: RsfcStatus, msg: impl Into<String>) -> RsfcStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> RsfcStatus) -> RsfcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RsfcStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, RsfcStatus> {
    if p.is_null() {
        return Err(fail(RsfcStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(RsfcStatus::InvalidInput, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread. Empty if none. Owned by
/// the library; valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rsfc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rsfc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a map and a mission, both as JSON text.
///
/// # Safety
/// `map_json` and `scenario_json` must be NUL-terminated strings and `out`
/// a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rsfc_scenario_from_json(
    map_json: *const c_char,
    scenario_json: *const c_char,
    out: *mut *mut RsfcScenario,
) -> RsfcStatus {
    guard(|| {
        if out.is_null() {
            return fail(RsfcStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let (m, s) = match (read_str(map_json, "map_json"), read_str(scenario_json, "scenario_json")) {
            (Ok(m), Ok(s)) => (m, s),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        match scenario_from_json(m, s) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RsfcScenario { inner }));
                RsfcStatus::Ok
            }
            Err(e) => fail(RsfcStatus::InvalidInput, e.to_string()),
        }
    })
}

/// Random forest world with default planner settings: a 10 x 10 x 2.5 m map,
/// `n_pillars` square pillars and `n_agents` agents on a ring with mirrored
/// goals.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rsfc_scenario_generate_forest(
    seed: u64,
    n_agents: usize,
    n_pillars: usize,
    radius: f64,
    out: *mut *mut RsfcScenario,
) -> RsfcStatus {
    guard(|| {
        if out.is_null() {
            return fail(RsfcStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        if !(radius > 0.0) {
            return fail(RsfcStatus::InvalidInput, "radius must be positive");
        }
        let params = ForestParams { radius, ..ForestParams::default() };
        match generate_forest_with(seed, n_agents, n_pillars, &params) {
            Ok((map, agents)) => {
                let inner = Scenario { map, agents, config: PlannerConfig::default() };
                *out = Box::into_raw(Box::new(RsfcScenario { inner }));
                RsfcStatus::Ok
            }
            Err(e) => fail(RsfcStatus::InvalidInput, e.to_string()),
        }
    })
}

/// Number of agents, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rsfc_scenario_agent_count(s: *const RsfcScenario) -> usize {
    s.as_ref().map_or(0, |s| s.inner.agents.len())
}

/// Turns the relative-corridor time delay on or off.
///
/// # Safety
/// `s` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rsfc_scenario_set_time_delay(s: *mut RsfcScenario, enabled: bool) -> RsfcStatus {
    match s.as_mut() {
        Some(s) => {
            s.inner.config.time_delay = enabled;
            RsfcStatus::Ok
        }
        None => fail(RsfcStatus::NullPointer, "scenario is null"),
    }
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsfc_scenario_free(s: *mut RsfcScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Runs the full planner. A plan handle is returned in `out` whenever the
/// planner ran, including when it failed, so the failing stage can be
/// queried; the return value says whether a verified plan was found.
///
/// # Safety
/// `s` must be a live scenario handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rsfc_plan(s: *const RsfcScenario, out: *mut *mut RsfcPlan) -> RsfcStatus {
    guard(|| {
        if out.is_null() {
            return fail(RsfcStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(s) = s.as_ref() else {
            return fail(RsfcStatus::NullPointer, "scenario is null");
        };
        let result = plan(&s.inner, PlanOptions::default());
        let (status, stage, reason) = match &result {
            Ok(_) => (RsfcStatus::Ok, "", ""),
            Err(f) => {
                set_error(f.to_string());
                (f.exit.into(), f.stage.name(), f.reason.as_str())
            }
        };
        let p = RsfcPlan {
            stage: CString::new(stage).unwrap_or_default(),
            reason: CString::new(reason).unwrap_or_default(),
            result,
            agents: s.inner.agents.clone(),
            config: s.inner.config.clone(),
        };
        *out = Box::into_raw(Box::new(p));
        status
    })
}

/// Name of the failing stage, or an empty string for a successful plan.
///
/// # Safety
/// `p` must be a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn rsfc_plan_failed_stage(p: *const RsfcPlan) -> *const c_char {
    p.as_ref().map_or(ptr::null(), |p| p.stage.as_ptr())
}

/// Machine-readable failure reason, or an empty string.
///
/// # Safety
/// `p` must be a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn rsfc_plan_failure_reason(p: *const RsfcPlan) -> *const c_char {
    p.as_ref().map_or(ptr::null(), |p| p.reason.as_ptr())
}

unsafe fn solved<'a>(p: *const RsfcPlan) -> Result<&'a PlanOutcome, RsfcStatus> {
    let p = p.as_ref().ok_or_else(|| fail(RsfcStatus::NullPointer, "plan is null"))?;
    match &p.result {
        Ok(o) if o.bundle.is_some() => Ok(o),
        _ => Err(fail(RsfcStatus::Unsolved, "plan has no trajectories")),
    }
}

/// Duration of the time-scaled plan in seconds.
///
/// # Safety
/// `p` must be a live plan handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rsfc_plan_duration(p: *const RsfcPlan, out: *mut f64) -> RsfcStatus {
    guard(|| {
        if out.is_null() {
            return fail(RsfcStatus::NullPointer, "out is null");
        }
        match solved(p) {
            Ok(o) => {
                *out = o.bundle.as_ref().map_or(0.0, |b| b.duration());
                RsfcStatus::Ok
            }
            Err(e) => e,
        }
    })
}

/// Optimal cost of the unscaled trajectories.
///
/// # Safety
/// `p` must be a live plan handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rsfc_plan_cost(p: *const RsfcPlan, out: *mut f64) -> RsfcStatus {
    guard(|| {
        if out.is_null() {
            return fail(RsfcStatus::NullPointer, "out is null");
        }
        match solved(p) {
            Ok(o) => {
                *out = o.cost.unwrap_or(f64::NAN);
                RsfcStatus::Ok
            }
            Err(e) => e,
        }
    })
}

/// Position, velocity and acceleration of agent `agent` (index into the
/// scenario's agent list) at time `t`. Each output points to 3 doubles; any
/// of them may be null.
///
/// # Safety
/// `p` must be a live plan handle; non-null outputs must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn rsfc_plan_sample(
    p: *const RsfcPlan,
    agent: usize,
    t: f64,
    pos: *mut f64,
    vel: *mut f64,
    acc: *mut f64,
) -> RsfcStatus {
    guard(|| {
        let o = match solved(p) {
            Ok(o) => o,
            Err(e) => return e,
        };
        let b = o.bundle.as_ref().expect("checked by solved");
        let Some(traj) = b.trajectories.get(agent) else {
            return fail(RsfcStatus::OutOfRange, format!("agent index {agent} out of range"));
        };
        if !(t >= 0.0 && t <= b.duration()) {
            return fail(RsfcStatus::OutOfRange, format!("time {t} outside [0, {}]", b.duration()));
        }
        let d = traj.eval_derivs(t);
        for (dst, v) in [pos, vel, acc].into_iter().zip(d) {
            if !dst.is_null() {
                for k in 0..3 {
                    *dst.add(k) = v[k];
                }
            }
        }
        RsfcStatus::Ok
    })
}

/// The plan document (trajectories, corridors, solver statistics and the
/// verification report) as JSON. Free the string with `rsfc_string_free`.
///
/// # Safety
/// `p` must be a live plan handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rsfc_plan_to_json(p: *const RsfcPlan, out: *mut *mut c_char) -> RsfcStatus {
    guard(|| {
        if out.is_null() {
            return fail(RsfcStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let o = match solved(p) {
            Ok(o) => o,
            Err(e) => return e,
        };
        let plan = &*p;
        let Some(doc) = PlanDocument::from_outcome(o, &plan.agents, &plan.config) else {
            return fail(RsfcStatus::Unsolved, "plan has no trajectories");
        };
        match CString::new(doc.to_json()) {
            Ok(s) => {
                *out = s.into_raw();
                RsfcStatus::Ok
            }
            Err(_) => fail(RsfcStatus::Internal, "JSON contains NUL"),
        }
    })
}

/// # Safety
/// `p` must be null or a plan handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsfc_plan_free(p: *mut RsfcPlan) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsfc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
