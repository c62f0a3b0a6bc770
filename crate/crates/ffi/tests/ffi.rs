use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use jay_repair::corpus::load_corpus;
use jay_repair::model::{ModelConfig, Seq2Seq};
use jay_repair::representation::Vocab;
use jay_repair_ffi::*;

const GCD: &str = "fn gcd(a: int, b: int) -> int {\n    while (b != 0) {\n        let t = b;\n        b = a % b;\n        a = t;\n    }\n    return a;\n}\n";
const SUITE: &str = r#"[{"id": "a", "entry": "gcd", "args": [12, 18], "expect": 6},
                        {"id": "b", "entry": "gcd", "args": [7, 5], "expect": 1}]"#;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Take ownership of a library string.
unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    jay_string_free(p);
    s
}

fn last_error() -> String {
    let p = jay_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn program_checks_and_test_runs() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(jay_check_program(c(GCD).as_ptr(), &mut out), JayStatus::Ok);
        assert_eq!(take(out), "[]");
        let broken = GCD.replace("return a;", "return a");
        assert_eq!(jay_check_program(c(&broken).as_ptr(), &mut out), JayStatus::Ok);
        let diags: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(diags.as_array().unwrap().len(), 1);

        assert_eq!(jay_run_tests(c(GCD).as_ptr(), c(SUITE).as_ptr(), 10_000, &mut out), JayStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(report["passed"], 2);
        assert_eq!(jay_run_tests(c(&broken).as_ptr(), c(SUITE).as_ptr(), 10_000, &mut out), JayStatus::Data);
        assert!(last_error().contains("does not compile"));
        assert_eq!(jay_run_tests(c(GCD).as_ptr(), c("{").as_ptr(), 10_000, &mut out), JayStatus::Data);
        assert_eq!(jay_run_tests(ptr::null(), c(SUITE).as_ptr(), 10_000, &mut out), JayStatus::NullArgument);
        jay_string_free(ptr::null_mut());
    }
}

#[test]
fn critic_judgements() {
    unsafe {
        let wrong = GCD.replace("b = a % b;", "b = a / b;");
        let mut accept = false;
        let j = |src: &str, critic: &str, buggy: bool, accept: &mut bool| {
            jay_judge(c(src).as_ptr(), c(SUITE).as_ptr(), c(critic).as_ptr(), buggy, 10_000, accept)
        };
        assert_eq!(j(GCD, "tests", false, &mut accept), JayStatus::Ok);
        assert!(accept);
        assert_eq!(j(&wrong, "tests", true, &mut accept), JayStatus::Ok);
        assert!(accept);
        assert_eq!(j(GCD, "tests", true, &mut accept), JayStatus::Ok);
        assert!(!accept);
        assert_eq!(j("fn", "compiler", true, &mut accept), JayStatus::Ok);
        assert!(!accept);
        assert_eq!(j("fn", "none", true, &mut accept), JayStatus::Ok);
        assert!(accept);
        assert_eq!(j(GCD, "strict", false, &mut accept), JayStatus::Usage);
        assert!(last_error().contains("unknown critic"));
        let bad = [0xffu8, 0];
        let status = jay_judge(bad.as_ptr().cast(), c(SUITE).as_ptr(), c("none").as_ptr(), false, 1, &mut accept);
        assert_eq!(status, JayStatus::InvalidUtf8);
    }
}

#[test]
fn fixer_handle_round_trip() {
    let corpus_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let corpus = load_corpus(&corpus_dir).unwrap();
    let vocab = Vocab::build(corpus.entries.iter().map(|e| e.program.text.as_str()));
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("fixer.ckpt");
    let vocab_path = dir.path().join("vocab.json");
    Seq2Seq::new(ModelConfig { max_target_len: 16, ..ModelConfig::tiny(vocab.len()) }).unwrap().save(&ckpt).unwrap();
    vocab.save(&vocab_path).unwrap();
    unsafe {
        let mut fixer = ptr::null_mut();
        let status = jay_fixer_load(c(ckpt.to_str().unwrap()).as_ptr(), c(vocab_path.to_str().unwrap()).as_ptr(), &mut fixer);
        assert_eq!(status, JayStatus::Ok);
        assert!(!fixer.is_null());
        let mut out = ptr::null_mut();
        assert_eq!(jay_fixer_repair(fixer, c(GCD).as_ptr(), 4, 1, 3, &mut out), JayStatus::Ok);
        let cands: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        let cands = cands.as_array().unwrap();
        assert_eq!(cands.len(), 3);
        assert_eq!(cands.iter().map(|c| c["rank"].as_u64().unwrap()).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(cands[0]["text"].as_str().unwrap().starts_with("fn gcd"));

        assert_eq!(jay_fixer_repair(fixer, c(GCD).as_ptr(), 40, 1, 3, &mut out), JayStatus::Data);
        assert_eq!(jay_fixer_repair(fixer, c(GCD).as_ptr(), 4, 1, 0, &mut out), JayStatus::Usage);
        assert_eq!(jay_fixer_repair(ptr::null(), c(GCD).as_ptr(), 4, 1, 1, &mut out), JayStatus::NullArgument);
        jay_fixer_free(fixer);
        jay_fixer_free(ptr::null_mut());

        let missing = dir.path().join("missing.ckpt");
        let status = jay_fixer_load(c(missing.to_str().unwrap()).as_ptr(), c(vocab_path.to_str().unwrap()).as_ptr(), &mut fixer);
        assert_eq!(status, JayStatus::Io);
        assert!(last_error().contains("missing.ckpt"));
    }
}

#[test]
fn header_declares_the_exported_api() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/jay_repair.h")).unwrap();
    for name in [
        "jay_last_error",
        "jay_string_free",
        "jay_check_program",
        "jay_run_tests",
        "jay_judge",
        "jay_fixer_load",
        "jay_fixer_repair",
        "jay_fixer_free",
        "JAY_STATUS_OK = 0",
        "typedef struct JayFixer JayFixer",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "jay_repair.h"

int main(void) {
    const char *src = "fn one() -> int {\n    return 1;\n}\n";
    const char *suite = "[{\"id\": \"t\", \"entry\": \"one\", \"args\": [], \"expect\": 1}]";
    char *report = NULL;
    if (jay_run_tests(src, suite, 1000, &report) != JAY_STATUS_OK) return 1;
    int ok = strstr(report, "\"passed\":1") != NULL;
    jay_string_free(report);
    bool accept = false;
    if (jay_judge(src, suite, "bogus", false, 1000, &accept) != JAY_STATUS_USAGE) return 2;
    if (jay_last_error() == NULL) return 3;
    return ok ? 0 : 4;
}
"#;

/// Compile a C program against the header and the static library.
#[test]
fn c_program_links_against_the_static_library() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libjay_repair_ffi.a");
    if !lib.exists() || std::process::Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library at {} or no C compiler", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.path().join("main");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = std::process::Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let run = std::process::Command::new(&bin).status().unwrap();
    assert_eq!(run.code(), Some(0));
}
