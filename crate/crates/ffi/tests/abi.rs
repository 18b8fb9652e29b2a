use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use proact::mdp::Trajectory;
use proact_ffi::*;

fn open(task: &str, budget: u32) -> *mut ProactSession {
    let task = CString::new(task).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { proact_session_new(task.as_ptr(), budget, 0.1, 0.1, &mut s) }, ProactStatus::Ok);
    assert!(!s.is_null());
    s
}

fn step(s: *mut ProactSession, action: ProactAction, content: &str) -> (ProactStatus, ProactStep) {
    let content = CString::new(content).unwrap();
    let mut out = ProactStep::default();
    let status = unsafe { proact_session_step(s, action, content.as_ptr(), &mut out) };
    (status, out)
}

fn observation(s: *mut ProactSession) -> String {
    let mut needed = 0;
    assert_eq!(unsafe { proact_session_observation(s, ptr::null_mut(), 0, &mut needed) }, ProactStatus::BufferTooSmall);
    let mut buf = vec![0 as c_char; needed];
    assert_eq!(unsafe { proact_session_observation(s, buf.as_mut_ptr(), buf.len(), &mut needed) }, ProactStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string()
}

fn trajectory(s: *mut ProactSession) -> Trajectory {
    let mut needed = 0;
    unsafe { proact_session_trajectory_json(s, ptr::null_mut(), 0, &mut needed) };
    let mut buf = vec![0 as c_char; needed];
    assert_eq!(unsafe { proact_session_trajectory_json(s, buf.as_mut_ptr(), buf.len(), &mut needed) }, ProactStatus::Ok);
    Trajectory::from_json_line(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap()).unwrap()
}

#[test]
fn episode_runs_to_budget_and_exports_shaped_trajectory() {
    let s = open("telepathy:3", 3);
    assert!(!observation(s).is_empty());
    let (st, out) = step(s, ProactAction::Answer, "nothing");
    assert_eq!(st, ProactStatus::Ok);
    assert_eq!((out.turn, out.remaining_budget, out.done), (1, 2, false));
    step(s, ProactAction::Answer, "nobody");
    let (_, out) = step(s, ProactAction::Query, "is it alive?");
    assert!(out.done);
    assert!(!observation(s).is_empty());
    assert_eq!(step(s, ProactAction::Query, "again").0, ProactStatus::EpisodeDone);

    let t = trajectory(s);
    assert_eq!(t.task_id, "telepathy:3");
    assert_eq!(t.len(), 3);
    // Second consecutive answer carries the info-seeking penalty.
    assert!((t.turns[1].shaped_reward - t.turns[1].raw_reward + 0.1).abs() < 1e-12);
    unsafe { proact_session_free(s) };
}

#[test]
fn errors_are_reported_as_codes() {
    let mut s = ptr::null_mut();
    let bad = CString::new("nowhere:1").unwrap();
    assert_eq!(unsafe { proact_session_new(bad.as_ptr(), 0, 0.1, 0.1, &mut s) }, ProactStatus::UnknownTask);
    assert!(s.is_null());
    let task = CString::new("function:1").unwrap();
    assert_eq!(unsafe { proact_session_new(task.as_ptr(), 0, -1.0, 0.1, &mut s) }, ProactStatus::InvalidArgument);
    assert_eq!(unsafe { proact_session_new(ptr::null(), 0, 0.1, 0.1, &mut s) }, ProactStatus::NullPointer);
    let invalid = [0xffu8 as c_char, 0];
    assert_eq!(unsafe { proact_session_new(invalid.as_ptr(), 0, 0.1, 0.1, &mut s) }, ProactStatus::InvalidUtf8);

    let s = open("function:1", 0);
    assert_eq!(unsafe { proact_session_stop(s) }, ProactStatus::InvalidArgument);
    assert_eq!(unsafe { proact_session_trajectory_json(s, ptr::null_mut(), 0, ptr::null_mut()) }, ProactStatus::InvalidArgument);
    let (st, out) = step(s, ProactAction::Search, "test input");
    assert_eq!(st, ProactStatus::Ok);
    assert_eq!(out.remaining_budget, 14);
    assert_eq!(unsafe { proact_session_stop(s) }, ProactStatus::Ok);
    assert_eq!(unsafe { proact_session_stop(s) }, ProactStatus::EpisodeDone);
    assert_eq!(unsafe { proact_session_step(ptr::null_mut(), ProactAction::Query, ptr::null(), ptr::null_mut()) }, ProactStatus::NullPointer);
    unsafe { proact_session_free(s) };
    unsafe { proact_session_free(ptr::null_mut()) };

    let msg = unsafe { CStr::from_ptr(proact_status_message(ProactStatus::BufferTooSmall)) };
    assert_eq!(msg.to_str().unwrap(), "buffer too small");
    let version = unsafe { CStr::from_ptr(proact_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn ffi_matches_the_library_episode() {
    let s = open("function:42", 0);
    let inputs = ["1 2 3 4", "0 0 0 0", "2 2 2 2"];
    step(s, ProactAction::Search, "where");
    for x in inputs {
        step(s, ProactAction::Query, x);
    }
    let via_ffi = trajectory(s);
    unsafe { proact_session_free(s) };

    let env = proact::env::EnvSuite::default().from_task_id("function:42").unwrap();
    let mut ep = proact::mdp::Episode::new(env, 15);
    ep.step(proact::mdp::ActionRecord::search("where")).unwrap();
    for x in inputs {
        ep.step(proact::mdp::ActionRecord::query(x)).unwrap();
    }
    let shaping = proact::shaping::ShapingConfig::new(0.1, 0.1).unwrap();
    let direct = proact::shaping::shape(ep.snapshot(), &shaping, 15);
    assert_eq!(via_ffi.to_json_line(), direct.to_json_line());
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "proact.h"

int main(void) {
    ProactSession *s = NULL;
    if (proact_session_new("telepathy:0", 0, 0.1, 0.1, &s) != PROACT_STATUS_OK) return 1;
    ProactStep out;
    if (proact_session_step(s, PROACT_ACTION_QUERY, "is it alive?", &out) != PROACT_STATUS_OK) return 2;
    if (out.turn != 1 || out.done) return 3;
    char buf[4096];
    size_t needed = 0;
    if (proact_session_observation(s, buf, sizeof buf, &needed) != PROACT_STATUS_OK) return 4;
    if (strlen(buf) + 1 != needed) return 5;
    if (proact_session_observation(s, buf, 1, &needed) != PROACT_STATUS_BUFFER_TOO_SMALL) return 6;
    proact_session_free(s);
    printf("%s\n", proact_status_message(PROACT_STATUS_EPISODE_DONE));
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    assert!(lib_dir.join("libproact_ffi.a").exists(), "static library not built in {}", lib_dir.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(lib_dir.join("libproact_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "episode already finished");
}
