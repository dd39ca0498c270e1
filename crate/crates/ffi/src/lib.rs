//! C interface to the mountain-car environment, the shaped Horde and the
//! t-test.
//!
//! Every function returns an [`ShStatus`]. On failure a message is kept per
//! thread and can be read with [`sh_last_error_message`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use shaping_horde::config::parse_config;
use shaping_horde::env::{McAction, McState, MountainCar, Transition};
use shaping_horde::gq::{argmax, LearnError};
use shaping_horde::harness::{ExperimentConfig, Scenario};
use shaping_horde::horde::{Horde, HordeError};
use shaping_horde::stats::t_test;
use shaping_horde::voting::{ensemble_action, VotingMethod};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Diverged = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShState {
    pub position: f64,
    pub velocity: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShTransition {
    pub next: ShState,
    pub reward: f64,
    pub terminal: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShTTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Opaque Horde handle.
pub struct ShHorde {
    horde: Horde,
}

pub const SH_SCENARIO_TWO_SHAPINGS: u32 = 0;
pub const SH_SCENARIO_THREE_SHAPINGS: u32 = 1;
pub const SH_VOTING_RANK: u32 = 0;
pub const SH_VOTING_MAJORITY: u32 = 1;
pub const SH_VOTING_QSUM: u32 = 2;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

struct Failure(ShStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(ShStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(msg: impl Into<String>) -> Self {
        Failure(ShStatus::InvalidArgument, msg.into())
    }
}

impl From<HordeError> for Failure {
    fn from(e: HordeError) -> Self {
        let status = match &e {
            HordeError::Demon { source: LearnError::Diverged(_), .. } => ShStatus::Diverged,
            HordeError::Feature(_) => ShStatus::OutOfRange,
            _ => ShStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ShStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ShStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ShStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn horde_ref<'a>(h: *const ShHorde) -> Result<&'a ShHorde, Failure> {
    h.as_ref().ok_or_else(|| Failure::null("horde"))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    if len < need {
        return Err(Failure::invalid(format!("{what} holds {len} values, need {need}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

fn state(s: ShState) -> Result<McState, Failure> {
    let st = McState::new(s.position, s.velocity);
    if st.in_bounds() {
        Ok(st)
    } else {
        Err(Failure(ShStatus::OutOfRange, format!("state ({}, {}) outside the state box", s.position, s.velocity)))
    }
}

fn action(a: u32) -> Result<McAction, Failure> {
    McAction::from_index(a as usize).ok_or_else(|| Failure::invalid(format!("action {a} (expected 0, 1 or 2)")))
}

fn sh_state(s: McState) -> ShState {
    ShState { position: s.position, velocity: s.velocity }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Start state of an episode.
///
/// # Safety
/// `out` must be null or point to writable memory for one `ShState`.
#[no_mangle]
pub unsafe extern "C" fn sh_mc_reset(out: *mut ShState) -> ShStatus {
    guard(|| {
        *out_ref(out, "out")? = sh_state(MountainCar.reset());
        Ok(())
    })
}

/// One environment step. Actions: 0 reverse, 1 coast, 2 forward.
///
/// # Safety
/// `out` must be null or point to writable memory for one `ShTransition`.
#[no_mangle]
pub unsafe extern "C" fn sh_mc_step(s: ShState, action_index: u32, out: *mut ShTransition) -> ShStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let t = MountainCar.step(state(s)?, action(action_index)?);
        *out = ShTransition { next: sh_state(t.to), reward: t.reward, terminal: t.terminal };
        Ok(())
    })
}

fn new_handle(cfg: &ExperimentConfig, out: *mut *mut ShHorde) -> Result<(), Failure> {
    let out = unsafe { out_ref(out, "out")? };
    let horde_cfg = cfg.horde_config().map_err(|e| Failure::invalid(e.to_string()))?;
    let horde = Horde::new(&horde_cfg)?;
    *out = Box::into_raw(Box::new(ShHorde { horde }));
    Ok(())
}

/// Creates the Horde of a preset scenario with default parameters.
///
/// # Safety
/// `out` must be null or point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn sh_horde_new(scenario: u32, out: *mut *mut ShHorde) -> ShStatus {
    guard(|| {
        let scenario = match scenario {
            SH_SCENARIO_TWO_SHAPINGS => Scenario::TwoShapings,
            SH_SCENARIO_THREE_SHAPINGS => Scenario::ThreeShapings,
            other => return Err(Failure::invalid(format!("unknown scenario {other}"))),
        };
        new_handle(&ExperimentConfig::for_scenario(scenario), out)
    })
}

/// Creates a Horde from experiment-config TOML text.
///
/// # Safety
/// `toml` must be null or a NUL-terminated string; `out` as in `sh_horde_new`.
#[no_mangle]
pub unsafe extern "C" fn sh_horde_new_from_toml(toml: *const c_char, out: *mut *mut ShHorde) -> ShStatus {
    guard(|| {
        if toml.is_null() {
            return Err(Failure::null("toml"));
        }
        let text = CStr::from_ptr(toml).to_str().map_err(|_| Failure::invalid("config is not UTF-8"))?;
        let cfg = parse_config(text, "config").map_err(|e| Failure::invalid(e.to_string()))?;
        new_handle(&cfg, out)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `h` must be null or a handle from `sh_horde_new*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sh_horde_free(h: *mut ShHorde) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sh_horde_demon_count(h: *const ShHorde, out: *mut usize) -> ShStatus {
    guard(|| {
        *out_ref(out, "out")? = horde_ref(h)?.horde.demons().len();
        Ok(())
    })
}

/// Learns from one behavior transition. `td_errors` (may be null) receives
/// one TD error per demon and must hold at least `len` values.
///
/// # Safety
/// `h` must be a live handle; `td_errors` null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sh_horde_observe(
    h: *mut ShHorde,
    from: ShState,
    action_index: u32,
    reward: f64,
    to: ShState,
    terminal: bool,
    behavior_prob: f64,
    td_errors: *mut f64,
    len: usize,
) -> ShStatus {
    guard(|| {
        let h = h.as_mut().ok_or_else(|| Failure::null("horde"))?;
        let t = Transition { from: state(from)?, action: action(action_index)?, reward, to: state(to)?, terminal };
        if !reward.is_finite() {
            return Err(Failure::invalid("reward must be finite"));
        }
        let n = h.horde.demons().len();
        let out = if td_errors.is_null() { None } else { Some(out_slice(td_errors, len, n, "td_errors")?) };
        let deltas = h.horde.observe(&t, behavior_prob)?;
        if let Some(out) = out {
            out.copy_from_slice(&deltas);
        }
        Ok(())
    })
}

/// Clears every eligibility trace.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sh_horde_end_episode(h: *mut ShHorde) -> ShStatus {
    guard(|| {
        h.as_mut().ok_or_else(|| Failure::null("horde"))?.horde.end_episode();
        Ok(())
    })
}

fn q_values(h: &ShHorde, demon: usize, s: ShState) -> Result<Vec<f64>, Failure> {
    let d = h.horde.demons().get(demon).ok_or_else(|| Failure::invalid(format!("no demon {demon}")))?;
    let coder = h.horde.coder();
    let tiles = coder.encode_state(state(s)?).map_err(HordeError::from)?;
    Ok(coder.q_values(d.weights().theta(), &tiles).map_err(HordeError::from)?)
}

/// Q values of one demon at `s`; `out` must hold at least 3 values.
///
/// # Safety
/// `h` must be a live handle; `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sh_horde_q_values(
    h: *const ShHorde,
    demon: usize,
    s: ShState,
    out: *mut f64,
    len: usize,
) -> ShStatus {
    guard(|| {
        let out = out_slice(out, len, McAction::COUNT, "out")?;
        out.copy_from_slice(&q_values(horde_ref(h)?, demon, s)?);
        Ok(())
    })
}

/// Greedy action of one demon, lowest index on ties.
///
/// # Safety
/// `h` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sh_horde_greedy_action(
    h: *const ShHorde,
    demon: usize,
    s: ShState,
    out: *mut u32,
) -> ShStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = argmax(&q_values(horde_ref(h)?, demon, s)?).expect("three actions") as u32;
        Ok(())
    })
}

/// Ensemble action of demons 1.. under `voting` (`SH_VOTING_*`), lowest
/// index on ties.
///
/// # Safety
/// `h` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sh_horde_ensemble_action(
    h: *const ShHorde,
    s: ShState,
    voting: u32,
    out: *mut u32,
) -> ShStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let h = horde_ref(h)?;
        let method = match voting {
            SH_VOTING_RANK => VotingMethod::Rank,
            SH_VOTING_MAJORITY => VotingMethod::Majority,
            SH_VOTING_QSUM => VotingMethod::Qsum,
            other => return Err(Failure::invalid(format!("unknown voting method {other}"))),
        };
        let qs = (1..h.horde.demons().len()).map(|d| q_values(h, d, s)).collect::<Result<Vec<_>, _>>()?;
        *out = ensemble_action(&qs, method).map_err(|e| Failure::invalid(e.to_string()))? as u32;
        Ok(())
    })
}

/// Two-sided pooled-variance Student's t-test.
///
/// # Safety
/// `a` and `b` must be valid for `na` and `nb` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sh_t_test(a: *const f64, na: usize, b: *const f64, nb: usize, out: *mut ShTTest) -> ShStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if a.is_null() || b.is_null() {
            return Err(Failure::null("sample"));
        }
        let (a, b) = (std::slice::from_raw_parts(a, na), std::slice::from_raw_parts(b, nb));
        let r = t_test(a, b).map_err(|e| Failure::invalid(e.to_string()))?;
        *out = ShTTest { t: r.t, df: r.df, p: r.p };
        Ok(())
    })
}
