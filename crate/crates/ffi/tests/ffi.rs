use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use forage_core::controller::{run_episode, Backends, EpisodeConfig, Instance};
use forage_core::diagnosis::GapDiagnosis;
use forage_core::document::DocumentEnv;
use forage_core::gateway::MockBackend;
use forage_core::policy::{Action, AnchorRef, ScriptedPolicy};
use forage_ffi::*;
use serde_json::Value;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/context_file.txt")
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Takes ownership of a returned JSON string.
fn take_json(out: *mut c_char) -> Value {
    assert!(!out.is_null());
    let value = serde_json::from_str(unsafe { CStr::from_ptr(out) }.to_str().unwrap()).unwrap();
    unsafe { forage_string_free(out) };
    value
}

fn last_error() -> String {
    let ptr = forage_last_error();
    assert!(!ptr.is_null());
    unsafe { CStr::from_ptr(ptr) }
        .to_string_lossy()
        .into_owned()
}

struct Env(*mut ForageEnv);

impl Env {
    fn new() -> Self {
        Self(forage_env_new())
    }
}

impl Drop for Env {
    fn drop(&mut self) {
        unsafe { forage_env_free(self.0) };
    }
}

fn registered() -> Env {
    let env = Env::new();
    let path = c(fixture().to_str().unwrap());
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { forage_register(env.0, path.as_ptr(), &mut out) },
        ForageStatus::Ok
    );
    let handle = take_json(out);
    assert_eq!(handle["id"], "context_file.txt");
    assert_eq!(handle["line_count"], 6500);
    env
}

#[test]
fn document_tools_round_trip() {
    let env = registered();
    let source = c("context_file.txt");
    let mut out = ptr::null_mut();

    let pattern = c("^Weather:");
    let status = unsafe {
        forage_grep(
            env.0,
            source.as_ptr(),
            pattern.as_ptr(),
            false,
            0,
            0,
            &mut out,
        )
    };
    assert_eq!(status, ForageStatus::Ok);
    let grep = take_json(out);
    assert_eq!(grep["snippets"][0]["anchor"], "context_file.txt:1833-1833");

    let status = unsafe { forage_scan(env.0, source.as_ptr(), pattern.as_ptr(), &mut out) };
    assert_eq!(status, ForageStatus::Ok);
    assert_eq!(
        take_json(out),
        serde_json::json!(["context_file.txt:1833-1833"])
    );

    let anchor = c("context_file.txt:1833-1840");
    assert_eq!(
        unsafe { forage_read(env.0, anchor.as_ptr(), 1, &mut out) },
        ForageStatus::Ok
    );
    let read = take_json(out);
    assert!(read["text"]
        .as_str()
        .unwrap()
        .contains("weather data for the user's location"));
    assert_eq!(read["anchor"], "context_file.txt:1833-1833");

    let text = c("one two, three");
    let mut count = 0usize;
    let status = unsafe { forage_count_tokens(env.0, text.as_ptr(), ptr::null(), &mut count) };
    assert_eq!(status, ForageStatus::Ok);
    assert!(count > 0);
}

#[test]
fn failures_set_status_and_message() {
    let env = registered();
    let mut out = ptr::null_mut();

    let missing = c("nope.txt");
    let pattern = c("x");
    let status = unsafe {
        forage_grep(
            env.0,
            missing.as_ptr(),
            pattern.as_ptr(),
            false,
            0,
            0,
            &mut out,
        )
    };
    assert_eq!(status, ForageStatus::NotFound);
    assert!(last_error().contains("nope.txt"));

    let source = c("context_file.txt");
    let bad = c("(unclosed");
    let status =
        unsafe { forage_grep(env.0, source.as_ptr(), bad.as_ptr(), false, 0, 0, &mut out) };
    assert_eq!(status, ForageStatus::InvalidArgument);

    let past_end = c("context_file.txt:9000-9001");
    assert_eq!(
        unsafe { forage_read(env.0, past_end.as_ptr(), 0, &mut out) },
        ForageStatus::InvalidArgument
    );
    assert!(last_error().contains("out of range"));

    let garbled = c("not an anchor");
    assert_eq!(
        unsafe { forage_read(env.0, garbled.as_ptr(), 0, &mut out) },
        ForageStatus::InvalidArgument
    );

    assert_eq!(
        unsafe { forage_read(ptr::null(), garbled.as_ptr(), 0, &mut out) },
        ForageStatus::NullArgument
    );
    assert_eq!(
        unsafe { forage_read(env.0, ptr::null(), 0, &mut out) },
        ForageStatus::NullArgument
    );
    let valid = c("context_file.txt:1-2");
    assert_eq!(
        unsafe { forage_read(env.0, valid.as_ptr(), 0, ptr::null_mut()) },
        ForageStatus::NullArgument
    );

    let invalid = [0xffu8, 0xfe, 0];
    let status = unsafe { forage_audit(invalid.as_ptr() as *const c_char, &mut out) };
    assert_eq!(status, ForageStatus::InvalidUtf8);

    let unknown = c("no-such-tokenizer");
    let text = c("abc");
    let mut count = 0usize;
    let status = unsafe { forage_count_tokens(env.0, text.as_ptr(), unknown.as_ptr(), &mut count) };
    assert_eq!(status, ForageStatus::InvalidArgument);
    assert!(out.is_null());
}

#[test]
fn efficiency_matches_reported_values() {
    let mut eff = 0.0;
    assert_eq!(
        unsafe { forage_token_efficiency(85.6, 21.4, &mut eff) },
        ForageStatus::Ok
    );
    assert!((eff - 4.01).abs() <= 0.03);
    assert_eq!(
        unsafe { forage_token_efficiency(78.7, 29.7, &mut eff) },
        ForageStatus::Ok
    );
    assert!((eff - 2.63).abs() <= 0.03);
    assert_eq!(
        unsafe { forage_token_efficiency(50.0, 0.0, &mut eff) },
        ForageStatus::InvalidArgument
    );
    assert!(!last_error().is_empty());
}

fn recorded_trajectory() -> String {
    let instance = Instance {
        id: "weather".into(),
        query: "Which service does the Weather detector call?".into(),
        doc_path: fixture(),
        gold: None,
        choices: None,
    };
    let mut policy = ScriptedPolicy::new(vec![
        Action::grep("^Weather:"),
        Action::update(
            "Weather comes from a public service.",
            AnchorRef::lines(1833, 1833),
        ),
        Action::Evaluate,
    ]);
    let diagnosis = MockBackend::texts([GapDiagnosis::sufficient("done", 0.9).to_json()]);
    let answer = MockBackend::texts(["a public weather service"]);
    let run = run_episode(
        &instance,
        &EpisodeConfig::default(),
        Backends {
            policy: &mut policy,
            diagnosis: &diagnosis,
            answer: &answer,
        },
        &DocumentEnv::new(),
    )
    .unwrap();
    run.log.to_jsonl(true)
}

#[test]
fn audit_and_replay_a_trajectory() {
    let jsonl = recorded_trajectory();
    let text = c(&jsonl);
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { forage_audit(text.as_ptr(), &mut out) },
        ForageStatus::Ok
    );
    let audit = take_json(out);
    assert_eq!(audit["steps_checked"], 3);
    assert_eq!(audit["violations"], serde_json::json!([]));

    let env = Env::new();
    assert_eq!(
        unsafe { forage_replay(env.0, text.as_ptr(), ptr::null(), &mut out) },
        ForageStatus::Ok
    );
    let replay = take_json(out);
    assert_eq!(replay["faithful"], true);
    assert_eq!(replay["steps"], 3);
    assert_eq!(replay["answer"], "a public weather service");

    // A Grep that claims to have changed the state is a violation.
    let forged: String = jsonl
        .lines()
        .map(|line| {
            let mut v: Value = serde_json::from_str(line).unwrap();
            if v["record"] == "step" && v["t"] == 0 {
                v["state_units"] = 1.into();
            }
            v.to_string() + "\n"
        })
        .collect();
    let forged = c(&forged);
    assert_eq!(
        unsafe { forage_audit(forged.as_ptr(), &mut out) },
        ForageStatus::Ok
    );
    let audit = take_json(out);
    assert!(audit["violations"][0]["message"]
        .as_str()
        .unwrap()
        .contains("foraging"));

    let no_header = c("");
    assert_eq!(
        unsafe { forage_replay(env.0, no_header.as_ptr(), ptr::null(), &mut out) },
        ForageStatus::Parse
    );
    let junk = c("{not json");
    assert_eq!(
        unsafe { forage_audit(junk.as_ptr(), &mut out) },
        ForageStatus::Parse
    );
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let source = dir.path().join("use.c");
    std::fs::write(
        &source,
        r#"#include "forage.h"
#include <stdio.h>

int main(void) {
    ForageEnv *env = forage_env_new();
    char *out = NULL;
    size_t count = 0;
    double eff = 0.0;
    ForageStatus s = forage_register(env, "doc.txt", &out);
    if (s != FORAGE_STATUS_OK) {
        const char *msg = forage_last_error();
        printf("%s\n", msg ? msg : "");
    }
    s = forage_grep(env, "doc.txt", "x", true, 1, 0, &out);
    s = forage_scan(env, "doc.txt", "x", &out);
    s = forage_read(env, "doc.txt:1-2", 0, &out);
    s = forage_count_tokens(env, "a b", NULL, &count);
    s = forage_token_efficiency(85.6, 21.4, &eff);
    s = forage_audit("", &out);
    s = forage_replay(env, "", NULL, &out);
    forage_string_free(out);
    forage_env_free(env);
    return s == FORAGE_STATUS_PANIC;
}
"#,
    )
    .unwrap();
    let output = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-c", "-o"])
        .arg(dir.path().join("use.o"))
        .arg("-I")
        .arg(&include)
        .arg(&source)
        .output()
        .expect("a C compiler on PATH");
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
}
