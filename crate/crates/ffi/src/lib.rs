//! C ABI for ivelab.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns an
//! [`IvelabStatus`]; on failure the message is kept per thread and can be read
//! with [`ivelab_last_error`] until the next failing call on that thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ivelab::env::{build_gridworld, Cell, GridworldSpec};
use ivelab::ive::{ive_exact, ive_opt_exact, IveReport};
use ivelab::mdp::{occupancy_curve, policy_evaluation, policy_transition_kernel, PolicyTable, TabularMdp};
use ivelab::Error;

/// Fixed-point tolerance used by the evaluation entry points.
const EVAL_TOL: f64 = 1e-10;

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IvelabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotStochastic = 4,
    OutOfRange = 5,
    NotConverged = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque tabular MDP.
pub struct IvelabMdp(TabularMdp);

/// Opaque stochastic policy table.
pub struct IvelabPolicy(PolicyTable);

/// Opaque implicit value ensemble: per-row mean and standard deviation.
pub struct IvelabReport(IveReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> IvelabStatus {
    match err {
        Error::DimensionMismatch { .. } => IvelabStatus::DimensionMismatch,
        Error::NotStochastic { .. } => IvelabStatus::NotStochastic,
        Error::IndexOutOfRange { .. } => IvelabStatus::OutOfRange,
        Error::NotConverged { .. } => IvelabStatus::NotConverged,
        _ => IvelabStatus::InvalidArgument,
    }
}

fn fail(status: IvelabStatus, msg: impl Into<String>) -> IvelabStatus {
    set_error(msg);
    status
}

/// Runs `body`, turning library errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), IvelabStatus>) -> IvelabStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => IvelabStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(IvelabStatus::Panic, "internal panic"),
    }
}

fn lib<T>(r: ivelab::Result<T>) -> Result<T, IvelabStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), IvelabStatus> {
    if p.is_null() {
        Err(fail(IvelabStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], IvelabStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, out_len: usize) -> Result<(), IvelabStatus> {
    if out_len < src.len() {
        return Err(fail(
            IvelabStatus::BufferTooSmall,
            format!("output buffer holds {out_len} values, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        non_null(out, "output buffer")?;
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), IvelabStatus> {
    non_null(out, "output handle")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failing call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ivelab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds an MDP from row-major `transition[s][a][s']` and `reward[s][a]`.
///
/// # Safety
/// `transition` must point to `n_states² · n_actions` values, `reward` to
/// `n_states · n_actions`, and `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ivelab_mdp_new(
    n_states: usize,
    n_actions: usize,
    transition: *const f64,
    reward: *const f64,
    gamma: f64,
    out: *mut *mut IvelabMdp,
) -> IvelabStatus {
    guard(|| {
        let p = slice(transition, n_states * n_states * n_actions, "transition")?;
        let r = slice(reward, n_states * n_actions, "reward")?;
        let mdp = lib(TabularMdp::new(n_states, n_actions, p.to_vec(), r.to_vec(), gamma))?;
        store(out, IvelabMdp(mdp))
    })
}

/// Builds the windy gridworld. `excluded_row`/`excluded_col` are recorded for
/// completeness; pass a negative value for no excluded cell.
///
/// # Safety
/// `out` must point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ivelab_gridworld_new(
    width: usize,
    height: usize,
    wind_prob: f64,
    gamma: f64,
    excluded_row: i64,
    excluded_col: i64,
    out: *mut *mut IvelabMdp,
) -> IvelabStatus {
    guard(|| {
        let excluded_cell = if excluded_row < 0 || excluded_col < 0 {
            None
        } else {
            Some(Cell {
                row: excluded_row as usize,
                col: excluded_col as usize,
            })
        };
        let spec = GridworldSpec {
            width,
            height,
            wind_prob,
            excluded_cell,
            gamma,
            ..GridworldSpec::default()
        };
        let mdp = lib(build_gridworld(&spec))?;
        store(out, IvelabMdp(mdp))
    })
}

/// # Safety
/// `mdp` must be null or a handle from an `ivelab_*_new` call, freed once.
#[no_mangle]
pub unsafe extern "C" fn ivelab_mdp_free(mdp: *mut IvelabMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// Number of states, or 0 for a null handle.
///
/// # Safety
/// `mdp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ivelab_mdp_n_states(mdp: *const IvelabMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.0.n_states())
}

/// Number of actions, or 0 for a null handle.
///
/// # Safety
/// `mdp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ivelab_mdp_n_actions(mdp: *const IvelabMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.0.n_actions())
}

/// Uniform random policy.
///
/// # Safety
/// `out` must point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ivelab_policy_uniform(
    n_states: usize,
    n_actions: usize,
    out: *mut *mut IvelabPolicy,
) -> IvelabStatus {
    guard(|| {
        if n_states == 0 || n_actions == 0 {
            return Err(fail(IvelabStatus::InvalidArgument, "policy needs at least one state and action"));
        }
        store(out, IvelabPolicy(PolicyTable::uniform(n_states, n_actions)))
    })
}

/// Deterministic policy choosing `actions[s]` in state `s`.
///
/// # Safety
/// `actions` must point to `n_states` values and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ivelab_policy_deterministic(
    actions: *const usize,
    n_states: usize,
    n_actions: usize,
    out: *mut *mut IvelabPolicy,
) -> IvelabStatus {
    guard(|| {
        let a = slice(actions, n_states, "actions")?;
        let policy = lib(PolicyTable::deterministic(a, n_actions))?;
        store(out, IvelabPolicy(policy))
    })
}

/// # Safety
/// `policy` must be null or a handle from an `ivelab_policy_*` call, freed once.
#[no_mangle]
pub unsafe extern "C" fn ivelab_policy_free(policy: *mut IvelabPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Writes `V^π` (one value per state) into `out`.
///
/// # Safety
/// Handles must be live; `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn ivelab_policy_evaluation(
    mdp: *const IvelabMdp,
    policy: *const IvelabPolicy,
    out: *mut f64,
    out_len: usize,
) -> IvelabStatus {
    guard(|| {
        non_null(mdp, "mdp")?;
        non_null(policy, "policy")?;
        let v = lib(policy_evaluation(&(*mdp).0, &(*policy).0, EVAL_TOL))?;
        copy_out(&v, out, out_len)
    })
}

/// Writes `(P^l)[start, target]` for `l = 1..=l_max` into `out`.
///
/// # Safety
/// Handles must be live; `out` must hold `out_len ≥ l_max` values.
#[no_mangle]
pub unsafe extern "C" fn ivelab_occupancy_curve(
    mdp: *const IvelabMdp,
    policy: *const IvelabPolicy,
    start: usize,
    target: usize,
    l_max: usize,
    out: *mut f64,
    out_len: usize,
) -> IvelabStatus {
    guard(|| {
        non_null(mdp, "mdp")?;
        non_null(policy, "policy")?;
        let kernel = lib(policy_transition_kernel(&(*mdp).0, &(*policy).0))?;
        let curve = lib(occupancy_curve(&kernel, start, target, l_max))?;
        copy_out(&curve, out, out_len)
    })
}

/// Implicit value ensemble of horizon `n` from a model and state values `v`.
/// With a null `policy` the optimality operator is used.
///
/// # Safety
/// `mdp` must be live, `policy` null or live, `v` must hold `v_len` values and
/// `out` must point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ivelab_ive_new(
    mdp: *const IvelabMdp,
    policy: *const IvelabPolicy,
    v: *const f64,
    v_len: usize,
    n: usize,
    out: *mut *mut IvelabReport,
) -> IvelabStatus {
    guard(|| {
        non_null(mdp, "mdp")?;
        let v = slice(v, v_len, "values")?;
        let report = match policy.as_ref() {
            Some(p) => lib(ive_exact(&(*mdp).0, &p.0, v, n))?,
            None => lib(ive_opt_exact(&(*mdp).0, v, n))?,
        };
        store(out, IvelabReport(report))
    })
}

/// # Safety
/// `report` must be null or a handle from [`ivelab_ive_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ivelab_ive_free(report: *mut IvelabReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of rows (states) in the report, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ivelab_ive_rows(report: *const IvelabReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.rows())
}

/// Writes the per-state ensemble mean into `out`.
///
/// # Safety
/// `report` must be live; `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn ivelab_ive_mean(report: *const IvelabReport, out: *mut f64, out_len: usize) -> IvelabStatus {
    guard(|| {
        non_null(report, "report")?;
        copy_out((*report).0.mean(), out, out_len)
    })
}

/// Writes the per-state ensemble standard deviation into `out`.
///
/// # Safety
/// `report` must be live; `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn ivelab_ive_std(report: *const IvelabReport, out: *mut f64, out_len: usize) -> IvelabStatus {
    guard(|| {
        non_null(report, "report")?;
        copy_out((*report).0.std(), out, out_len)
    })
}
