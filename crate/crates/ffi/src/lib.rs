//! C interface to the `cdpg` library.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns a
//! [`CdpgStatus`]; on failure [`cdpg_last_error`] describes the cause for the
//! calling thread. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cdpg::cliffwalk::build_cliffwalk;
use cdpg::{
    cdpg_train, evaluate_policy, risk_value, state_distribution, CdpgConfig, EvalConfig,
    ReturnDistributionTable, RiskMeasure, SoftmaxPolicy, SupportGrid, TabularMdp,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdpgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    ParseError = 4,
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdpgRiskKind {
    Cvar = 0,
    Expectation = 1,
    MeanSemideviation = 2,
}

pub struct CdpgMdp(TabularMdp);
pub struct CdpgPolicy(SoftmaxPolicy);
pub struct CdpgTable(ReturnDistributionTable);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(CdpgStatus, String);

impl From<cdpg::Error> for Failure {
    fn from(e: cdpg::Error) -> Self {
        let status = match e {
            cdpg::Error::Dimension(_) | cdpg::Error::GridMismatch { .. } => {
                CdpgStatus::DimensionMismatch
            }
            cdpg::Error::Json(_) | cdpg::Error::Config(_) => CdpgStatus::ParseError,
            cdpg::Error::InvalidInput(_) => CdpgStatus::InvalidArgument,
            _ => CdpgStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CdpgStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure or panic, and converts it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CdpgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CdpgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CdpgStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(CdpgStatus::ParseError, format!("{what}: {e}")))
}

fn risk_spec(kind: CdpgRiskKind, alpha: f64) -> RiskMeasure {
    match kind {
        CdpgRiskKind::Cvar => RiskMeasure::Cvar { alpha },
        CdpgRiskKind::Expectation => RiskMeasure::Expectation,
        CdpgRiskKind::MeanSemideviation => RiskMeasure::MeanSemideviation { alpha },
    }
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Failure> {
    if got != want {
        return Err(Failure(
            CdpgStatus::DimensionMismatch,
            format!("{what}: buffer holds {got} values, need {want}"),
        ));
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdpg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn cdpg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cdpg_mdp_cliffwalk(
    p_slip: f64,
    fall_cost: f64,
    step_cost: f64,
    gamma: f64,
    out: *mut *mut CdpgMdp,
) -> CdpgStatus {
    guard(|| store(out, CdpgMdp(build_cliffwalk(p_slip, fall_cost, step_cost, gamma)?)))
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` as for [`cdpg_mdp_cliffwalk`].
#[no_mangle]
pub unsafe extern "C" fn cdpg_mdp_from_json(json: *const c_char, out: *mut *mut CdpgMdp) -> CdpgStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        let mdp: TabularMdp = serde_json::from_str(text)
            .map_err(|e| Failure(CdpgStatus::ParseError, e.to_string()))?;
        store(out, CdpgMdp(mdp))
    })
}

/// # Safety
/// `mdp` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn cdpg_mdp_n_states(mdp: *const CdpgMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.0.n_states())
}

/// # Safety
/// `mdp` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn cdpg_mdp_n_actions(mdp: *const CdpgMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.0.n_actions())
}

/// # Safety
/// `mdp` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn cdpg_mdp_free(mdp: *mut CdpgMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cdpg_policy_uniform(
    n_states: usize,
    n_actions: usize,
    out: *mut *mut CdpgPolicy,
) -> CdpgStatus {
    guard(|| {
        if n_states == 0 || n_actions == 0 {
            return Err(Failure(
                CdpgStatus::InvalidArgument,
                "policy needs at least one state and action".into(),
            ));
        }
        store(out, CdpgPolicy(SoftmaxPolicy::uniform(n_states, n_actions)))
    })
}

/// Builds a policy from row-major logits `theta[s * n_actions + a]`.
///
/// # Safety
/// `theta` must point to `len` readable values.
#[no_mangle]
pub unsafe extern "C" fn cdpg_policy_from_theta(
    n_states: usize,
    n_actions: usize,
    theta: *const f64,
    len: usize,
    out: *mut *mut CdpgPolicy,
) -> CdpgStatus {
    guard(|| {
        if theta.is_null() {
            return Err(null("theta"));
        }
        check_len(len, n_states * n_actions, "theta")?;
        let theta = std::slice::from_raw_parts(theta, len).to_vec();
        store(out, CdpgPolicy(SoftmaxPolicy::from_theta(n_states, n_actions, theta)?))
    })
}

/// Copies the logits into `out`, which must hold exactly `n_states * n_actions` values.
///
/// # Safety
/// `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn cdpg_policy_theta(
    policy: *const CdpgPolicy,
    out: *mut f64,
    len: usize,
) -> CdpgStatus {
    guard(|| {
        let p = deref(policy, "policy")?;
        check_len(len, p.0.n_params(), "theta")?;
        out_slice(out, len, "out")?.copy_from_slice(p.0.theta());
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn cdpg_policy_free(policy: *mut CdpgPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Model-based evaluation with default stopping rules on the grid
/// `[z_min, z_max]` with `n_atoms` atoms.
///
/// # Safety
/// Handles must come from this library; `out` as for [`cdpg_mdp_cliffwalk`].
#[no_mangle]
pub unsafe extern "C" fn cdpg_evaluate(
    mdp: *const CdpgMdp,
    policy: *const CdpgPolicy,
    z_min: f64,
    z_max: f64,
    n_atoms: usize,
    out: *mut *mut CdpgTable,
) -> CdpgStatus {
    guard(|| {
        let mdp = deref(mdp, "mdp")?;
        let policy = deref(policy, "policy")?;
        let grid = SupportGrid::new(z_min, z_max, n_atoms)?;
        let result = evaluate_policy(&mdp.0, &policy.0, grid, &EvalConfig::default(), None)?;
        store(out, CdpgTable(result.table))
    })
}

/// # Safety
/// `table` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn cdpg_table_n_atoms(table: *const CdpgTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.grid().n_atoms())
}

/// Writes the state distribution `Σ_a π(a|s) η^{(s,a)}` into `out`.
///
/// # Safety
/// `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn cdpg_table_state_distribution(
    table: *const CdpgTable,
    policy: *const CdpgPolicy,
    state: usize,
    out: *mut f64,
    len: usize,
) -> CdpgStatus {
    guard(|| {
        let table = deref(table, "table")?;
        let policy = deref(policy, "policy")?;
        check_len(len, table.0.grid().n_atoms(), "distribution")?;
        let dist = state_distribution(&table.0, &policy.0, state)?;
        out_slice(out, len, "out")?.copy_from_slice(dist.probs());
        Ok(())
    })
}

/// Risk of the state distribution at `state`; `alpha` is ignored for the expectation.
///
/// # Safety
/// `out` must point to one writable value.
#[no_mangle]
pub unsafe extern "C" fn cdpg_table_risk(
    table: *const CdpgTable,
    policy: *const CdpgPolicy,
    state: usize,
    kind: CdpgRiskKind,
    alpha: f64,
    out: *mut f64,
) -> CdpgStatus {
    guard(|| {
        let table = deref(table, "table")?;
        let policy = deref(policy, "policy")?;
        let dist = state_distribution(&table.0, &policy.0, state)?;
        let value = risk_value(&dist, &risk_spec(kind, alpha))?;
        *out_slice(out, 1, "out")?.first_mut().expect("one slot") = value;
        Ok(())
    })
}

/// # Safety
/// `table` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn cdpg_table_free(table: *mut CdpgTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Trains from the uniform policy. `config_json` holds training settings
/// (missing keys take defaults) and may be null for all defaults.
///
/// # Safety
/// `config_json` must be null or NUL-terminated; `out` as for [`cdpg_mdp_cliffwalk`].
#[no_mangle]
pub unsafe extern "C" fn cdpg_train_policy(
    mdp: *const CdpgMdp,
    kind: CdpgRiskKind,
    alpha: f64,
    config_json: *const c_char,
    out: *mut *mut CdpgPolicy,
) -> CdpgStatus {
    guard(|| {
        let mdp = deref(mdp, "mdp")?;
        let config: CdpgConfig = if config_json.is_null() {
            CdpgConfig::default()
        } else {
            serde_json::from_str(c_str(config_json, "config_json")?)
                .map_err(|e| Failure(CdpgStatus::ParseError, e.to_string()))?
        };
        let (policy, _) = cdpg_train(&mdp.0, &risk_spec(kind, alpha), &config, None)?;
        store(out, CdpgPolicy(policy))
    })
}
