//! C ABI over single gym episodes.
//!
//! A session owns one episode. Strings cross the boundary as NUL-terminated
//! UTF-8; results are copied into caller buffers. When a buffer is too
//! small the call returns `ProactStatus::BufferTooSmall` and reports the
//! required size (including the terminator) through `needed`.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use proact::env::EnvSuite;
use proact::mdp::{ActionKind, ActionRecord, Episode};
use proact::shaping::{shape, ShapingConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProactStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    UnknownTask = 3,
    InvalidArgument = 4,
    EpisodeDone = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// Action kinds, matching the `action`, `search` and `answer` wire choices.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProactAction {
    Query = 0,
    Search = 1,
    Answer = 2,
}

impl From<ProactAction> for ActionKind {
    fn from(a: ProactAction) -> Self {
        match a {
            ProactAction::Query => ActionKind::Query,
            ProactAction::Search => ActionKind::Search,
            ProactAction::Answer => ActionKind::Answer,
        }
    }
}

/// Opaque episode handle.
pub struct ProactSession {
    episode: Episode,
    shaping: ShapingConfig,
    last_observation: String,
}

/// Outcome of one step.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProactStep {
    pub reward: f64,
    pub done: bool,
    pub turn: u32,
    pub remaining_budget: u32,
}

fn guard(f: impl FnOnce() -> ProactStatus) -> ProactStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(ProactStatus::Internal)
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, ProactStatus> {
    if p.is_null() {
        return Err(ProactStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| ProactStatus::InvalidUtf8)
}

unsafe fn copy_out(text: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> ProactStatus {
    let n = text.len() + 1;
    if !needed.is_null() {
        *needed = n;
    }
    if text.as_bytes().contains(&0) {
        return ProactStatus::Internal;
    }
    if buf.is_null() || cap < n {
        return ProactStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
    *buf.add(text.len()) = 0;
    ProactStatus::Ok
}

/// Opens an episode for `task_id` (for example `function:7`). A `budget` of
/// 0 selects the environment default. Lambdas shape the exported trajectory.
///
/// # Safety
/// `task_id` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn proact_session_new(
    task_id: *const c_char,
    budget: u32,
    lambda_ans: f64,
    lambda_think: f64,
    out: *mut *mut ProactSession,
) -> ProactStatus {
    guard(|| {
        if out.is_null() {
            return ProactStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let task_id = match read_str(task_id) {
            Ok(t) => t,
            Err(e) => return e,
        };
        let Ok(shaping) = ShapingConfig::new(lambda_ans, lambda_think) else {
            return ProactStatus::InvalidArgument;
        };
        let Ok(env) = EnvSuite::default().from_task_id(task_id) else {
            return ProactStatus::UnknownTask;
        };
        let budget = if budget == 0 { env.default_budget() } else { budget as usize };
        let episode = Episode::new(env, budget);
        let last_observation = episode.intro().to_string();
        *out = Box::into_raw(Box::new(ProactSession { episode, shaping, last_observation }));
        ProactStatus::Ok
    })
}

/// Releases a session. Null is ignored.
///
/// # Safety
/// `session` must come from `proact_session_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn proact_session_free(session: *mut ProactSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Plays one turn. Empty `content` is a malformed action and wastes the turn.
///
/// # Safety
/// Pointers must be valid; `content` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn proact_session_step(
    session: *mut ProactSession,
    action: ProactAction,
    content: *const c_char,
    out: *mut ProactStep,
) -> ProactStatus {
    guard(|| {
        let Some(s) = session.as_mut() else { return ProactStatus::NullPointer };
        if out.is_null() {
            return ProactStatus::NullPointer;
        }
        let content = match read_str(content) {
            Ok(c) => c,
            Err(e) => return e,
        };
        let turn = match s.episode.step(ActionRecord::new(action.into(), content)) {
            Ok(turn) => turn.clone(),
            Err(_) => return ProactStatus::EpisodeDone,
        };
        s.last_observation = turn.observation;
        *out = ProactStep {
            reward: turn.raw_reward,
            done: s.episode.is_done(),
            turn: s.episode.turn() as u32,
            remaining_budget: s.episode.remaining() as u32,
        };
        ProactStatus::Ok
    })
}

/// Ends the episode early. Before the first turn this is rejected.
///
/// # Safety
/// `session` must be valid.
#[no_mangle]
pub unsafe extern "C" fn proact_session_stop(session: *mut ProactSession) -> ProactStatus {
    guard(|| {
        let Some(s) = session.as_mut() else { return ProactStatus::NullPointer };
        if s.episode.is_done() {
            ProactStatus::EpisodeDone
        } else if s.episode.stop() {
            ProactStatus::Ok
        } else {
            ProactStatus::InvalidArgument
        }
    })
}

/// Copies the latest observation (the task intro before any step).
///
/// # Safety
/// `session` must be valid; `buf` must hold `cap` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn proact_session_observation(
    session: *const ProactSession,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> ProactStatus {
    guard(|| match session.as_ref() {
        Some(s) => copy_out(&s.last_observation, buf, cap, needed),
        None => ProactStatus::NullPointer,
    })
}

/// Copies the shaped trajectory as one JSON line. An unfinished episode is
/// reported as stopped by the agent.
///
/// # Safety
/// As for `proact_session_observation`.
#[no_mangle]
pub unsafe extern "C" fn proact_session_trajectory_json(
    session: *const ProactSession,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> ProactStatus {
    guard(|| {
        let Some(s) = session.as_ref() else { return ProactStatus::NullPointer };
        if s.episode.turns().is_empty() {
            return ProactStatus::InvalidArgument;
        }
        let traj = shape(s.episode.snapshot(), &s.shaping, s.episode.budget());
        copy_out(&traj.to_json_line(), buf, cap, needed)
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn proact_status_message(status: ProactStatus) -> *const c_char {
    let msg: &'static CStr = match status {
        ProactStatus::Ok => c"ok",
        ProactStatus::NullPointer => c"null pointer argument",
        ProactStatus::InvalidUtf8 => c"string is not valid UTF-8",
        ProactStatus::UnknownTask => c"unknown task id",
        ProactStatus::InvalidArgument => c"invalid argument",
        ProactStatus::EpisodeDone => c"episode already finished",
        ProactStatus::BufferTooSmall => c"buffer too small",
        ProactStatus::Internal => c"internal error",
    };
    msg.as_ptr()
}

/// Library version, NUL-terminated.
#[no_mangle]
pub extern "C" fn proact_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
