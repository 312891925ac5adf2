//! C ABI for executing saved policies from other languages. A policy file is
//! loaded into an opaque handle; callers walk the controller by passing
//! observations and reading back actions. All functions return an error code
//! and never unwind across the boundary.

use pomcgs::fsc::{PolicyFile, StepOutcome};
use pomcgs::pomdp::{ActionSpec, ObservationSample};
use std::ffi::CStr;
use std::os::raw::c_char;

pub const POMCGS_OK: i32 = 0;
/// The controller has no edge for this observation; switch to the blind action.
pub const POMCGS_OPEN_LEAF: i32 = 1;
pub const POMCGS_ERR_NULL_ARGUMENT: i32 = -1;
pub const POMCGS_ERR_IO: i32 = -2;
pub const POMCGS_ERR_PARSE: i32 = -3;
pub const POMCGS_ERR_UNKNOWN_NODE: i32 = -4;
pub const POMCGS_ERR_WRONG_ACTION_KIND: i32 = -5;
pub const POMCGS_ERR_NO_BLIND_ACTION: i32 = -6;
pub const POMCGS_ERR_BUFFER_TOO_SMALL: i32 = -7;

pub const POMCGS_ACTION_DISCRETE: i32 = 0;
pub const POMCGS_ACTION_CONTINUOUS: i32 = 1;

/// Opaque handle to a loaded policy.
pub struct PomcgsPolicy {
    inner: PolicyFile,
}

/// Load a policy file from `path` into `*out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pomcgs_policy_load(path: *const c_char, out: *mut *mut PomcgsPolicy) -> i32 {
    if path.is_null() || out.is_null() {
        return POMCGS_ERR_NULL_ARGUMENT;
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        return POMCGS_ERR_NULL_ARGUMENT;
    };
    let Ok(text) = std::fs::read_to_string(path) else {
        return POMCGS_ERR_IO;
    };
    match PolicyFile::deserialize(&text) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(PomcgsPolicy { inner }));
            POMCGS_OK
        }
        Err(_) => POMCGS_ERR_PARSE,
    }
}

/// Release a handle returned by `pomcgs_policy_load`. NULL is a no-op.
///
/// # Safety
/// `policy` must be NULL or a pointer from `pomcgs_policy_load`, freed once.
#[no_mangle]
pub unsafe extern "C" fn pomcgs_policy_free(policy: *mut PomcgsPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// # Safety
/// `policy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pomcgs_policy_node_count(policy: *const PomcgsPolicy) -> u64 {
    if policy.is_null() {
        return 0;
    }
    (*policy).inner.nodes.len() as u64
}

/// # Safety
/// `policy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pomcgs_policy_start_node(policy: *const PomcgsPolicy) -> u64 {
    if policy.is_null() {
        return 0;
    }
    (*policy).inner.n0 as u64
}

/// Discount factor of the policy's source problem.
///
/// # Safety
/// `policy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pomcgs_policy_gamma(policy: *const PomcgsPolicy) -> f64 {
    if policy.is_null() {
        return f64::NAN;
    }
    (*policy).inner.gamma
}

/// Copy the model fingerprint into `buf` (NUL-terminated); `*len` holds the
/// fingerprint length (excluding NUL) on return.
///
/// # Safety
/// `policy` must be live; `buf` must hold `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pomcgs_policy_fingerprint(
    policy: *const PomcgsPolicy,
    buf: *mut c_char,
    cap: usize,
    len: *mut usize,
) -> i32 {
    if policy.is_null() || buf.is_null() || len.is_null() {
        return POMCGS_ERR_NULL_ARGUMENT;
    }
    let fp = (*policy).inner.fingerprint.as_bytes();
    *len = fp.len();
    if cap < fp.len() + 1 {
        return POMCGS_ERR_BUFFER_TOO_SMALL;
    }
    std::ptr::copy_nonoverlapping(fp.as_ptr(), buf as *mut u8, fp.len());
    *buf.add(fp.len()) = 0;
    POMCGS_OK
}

unsafe fn node_action<'p>(
    policy: *const PomcgsPolicy,
    node: u64,
) -> Result<Option<&'p ActionSpec>, i32> {
    let Some(handle) = policy.as_ref() else {
        return Err(POMCGS_ERR_NULL_ARGUMENT);
    };
    handle.inner.action_of(node as usize).map_err(|_| POMCGS_ERR_UNKNOWN_NODE)
}

/// Kind of the node's committed action, written to `*kind`
/// (`POMCGS_ACTION_DISCRETE` or `POMCGS_ACTION_CONTINUOUS`). Returns
/// `POMCGS_OPEN_LEAF` when the node has no committed action.
///
/// # Safety
/// `policy` must be live; `kind` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pomcgs_node_action_kind(
    policy: *const PomcgsPolicy,
    node: u64,
    kind: *mut i32,
) -> i32 {
    if kind.is_null() {
        return POMCGS_ERR_NULL_ARGUMENT;
    }
    match node_action(policy, node) {
        Err(code) => code,
        Ok(None) => POMCGS_OPEN_LEAF,
        Ok(Some(ActionSpec::Discrete(_))) => {
            *kind = POMCGS_ACTION_DISCRETE;
            POMCGS_OK
        }
        Ok(Some(ActionSpec::Continuous(_))) => {
            *kind = POMCGS_ACTION_CONTINUOUS;
            POMCGS_OK
        }
    }
}

/// Committed discrete action index of a node.
///
/// # Safety
/// `policy` must be live; `action` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pomcgs_node_action_discrete(
    policy: *const PomcgsPolicy,
    node: u64,
    action: *mut u64,
) -> i32 {
    if action.is_null() {
        return POMCGS_ERR_NULL_ARGUMENT;
    }
    match node_action(policy, node) {
        Err(code) => code,
        Ok(None) => POMCGS_OPEN_LEAF,
        Ok(Some(ActionSpec::Discrete(i))) => {
            *action = *i as u64;
            POMCGS_OK
        }
        Ok(Some(ActionSpec::Continuous(_))) => POMCGS_ERR_WRONG_ACTION_KIND,
    }
}

/// Committed continuous action of a node, copied into `coords`; `*dim` holds
/// the action dimension on return.
///
/// # Safety
/// `policy` must be live; `coords` must hold `cap` doubles; `dim` valid.
#[no_mangle]
pub unsafe extern "C" fn pomcgs_node_action_continuous(
    policy: *const PomcgsPolicy,
    node: u64,
    coords: *mut f64,
    cap: usize,
    dim: *mut usize,
) -> i32 {
    if coords.is_null() || dim.is_null() {
        return POMCGS_ERR_NULL_ARGUMENT;
    }
    match node_action(policy, node) {
        Err(code) => code,
        Ok(None) => POMCGS_OPEN_LEAF,
        Ok(Some(ActionSpec::Discrete(_))) => POMCGS_ERR_WRONG_ACTION_KIND,
        Ok(Some(ActionSpec::Continuous(v))) => {
            *dim = v.len();
            if cap < v.len() {
                return POMCGS_ERR_BUFFER_TOO_SMALL;
            }
            std::ptr::copy_nonoverlapping(v.as_ptr(), coords, v.len());
            POMCGS_OK
        }
    }
}

/// Blind fallback action (always discrete), used after an open leaf.
///
/// # Safety
/// `policy` must be live; `action` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pomcgs_blind_action_discrete(
    policy: *const PomcgsPolicy,
    action: *mut u64,
) -> i32 {
    if policy.is_null() || action.is_null() {
        return POMCGS_ERR_NULL_ARGUMENT;
    }
    match &(*policy).inner.blind_action {
        Some(ActionSpec::Discrete(i)) => {
            *action = *i as u64;
            POMCGS_OK
        }
        Some(ActionSpec::Continuous(_)) => POMCGS_ERR_WRONG_ACTION_KIND,
        None => POMCGS_ERR_NO_BLIND_ACTION,
    }
}

unsafe fn step(policy: *const PomcgsPolicy, node: u64, o: &ObservationSample, next: *mut u64) -> i32 {
    if policy.is_null() || next.is_null() {
        return POMCGS_ERR_NULL_ARGUMENT;
    }
    match (*policy).inner.execute_policy_step(node as usize, o) {
        Err(_) => POMCGS_ERR_UNKNOWN_NODE,
        Ok(StepOutcome::OpenLeaf) => POMCGS_OPEN_LEAF,
        Ok(StepOutcome::Next(n)) => {
            *next = n as u64;
            POMCGS_OK
        }
    }
}

/// Follow the controller from `node` under a discrete observation. On
/// `POMCGS_OK`, `*next` holds the successor node; `POMCGS_OPEN_LEAF` means
/// the caller should switch to the blind action permanently.
///
/// # Safety
/// `policy` must be live; `next` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pomcgs_step_discrete(
    policy: *const PomcgsPolicy,
    node: u64,
    observation: u64,
    next: *mut u64,
) -> i32 {
    step(policy, node, &ObservationSample::Discrete(observation as usize), next)
}

/// Follow the controller from `node` under a continuous observation vector.
///
/// # Safety
/// `policy` must be live; `observation` must hold `dim` doubles; `next` valid.
#[no_mangle]
pub unsafe extern "C" fn pomcgs_step_continuous(
    policy: *const PomcgsPolicy,
    node: u64,
    observation: *const f64,
    dim: usize,
    next: *mut u64,
) -> i32 {
    if observation.is_null() {
        return POMCGS_ERR_NULL_ARGUMENT;
    }
    let obs = std::slice::from_raw_parts(observation, dim).to_vec();
    step(policy, node, &ObservationSample::Continuous(obs), next)
}
