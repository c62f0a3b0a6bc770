//! C ABI over the Jay repair toolkit.
//!
//! Every fallible function returns a [`JayStatus`]. On failure a message is
//! available from [`jay_last_error`] on the same thread. Strings returned
//! through out-parameters are owned by the caller and must be released with
//! [`jay_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use jay_repair::critics::{judge, CriticFamily, CriticKind, Polarity};
use jay_repair::generate::propose;
use jay_repair::minilang::{run_tests, LineRegion, SourceProgram, TestSuite};
use jay_repair::model::Seq2Seq;
use jay_repair::representation::{RepresentationConfig, Vocab};
use jay_repair::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JayStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// A bad argument value, such as an unknown critic or a zero beam.
    Usage = 3,
    /// Malformed input data: bad JSON, an unreadable checkpoint, a region outside the program.
    Data = 4,
    Io = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(JayStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Usage(_) => JayStatus::Usage,
            Error::Io { .. } => JayStatus::Io,
            _ => JayStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> JayStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JayStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            JayStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a nul-terminated string valid for reads.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(JayStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(JayStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// # Safety
/// `out` is null or valid for a pointer write.
unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(JayStatus::NullArgument, "output pointer is null".into()));
    }
    let c = CString::new(s).map_err(|_| Failure(JayStatus::Data, "output contains a nul byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn parse_suite(json: &str) -> Result<TestSuite, Failure> {
    TestSuite::from_json(json).map_err(|e| Failure(JayStatus::Data, format!("bad test suite: {e}")))
}

/// The message of the last failure on this thread, or null. Valid until the
/// next failing call on this thread; do not free.
#[no_mangle]
pub extern "C" fn jay_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or a string returned by this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn jay_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse and typecheck `source`. Writes a JSON array of diagnostics (empty
/// when the program compiles) to `diagnostics_out`.
///
/// # Safety
/// `source` is a nul-terminated string; `diagnostics_out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn jay_check_program(source: *const c_char, diagnostics_out: *mut *mut c_char) -> JayStatus {
    guard(|| {
        let src = str_arg(source, "source")?;
        let diags = match SourceProgram::new("input", src).compile() {
            Ok(_) => vec![],
            Err(d) => d,
        };
        put_string(diagnostics_out, serde_json::to_string(&diags).expect("serializable"))
    })
}

/// Compile `source` and run the JSON test suite with the given step budget.
/// Writes the test report as JSON. A program that does not compile is a data error.
///
/// # Safety
/// String arguments are nul-terminated; `report_out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn jay_run_tests(
    source: *const c_char,
    suite_json: *const c_char,
    fuel: u64,
    report_out: *mut *mut c_char,
) -> JayStatus {
    guard(|| {
        let src = str_arg(source, "source")?;
        let suite = parse_suite(str_arg(suite_json, "suite_json")?)?;
        let ast = SourceProgram::new("input", src)
            .compile()
            .map_err(|d| Failure(JayStatus::Data, format!("program does not compile: {}", d[0])))?;
        let report = run_tests(&ast, &suite, fuel);
        put_string(report_out, serde_json::to_string(&report).expect("serializable"))
    })
}

/// Judge a candidate with a critic (`none`, `compiler` or `tests`). With
/// `buggy` false the critic accepts correct code, otherwise buggy code.
///
/// # Safety
/// String arguments are nul-terminated; `accept_out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn jay_judge(
    source: *const c_char,
    suite_json: *const c_char,
    critic: *const c_char,
    buggy: bool,
    fuel: u64,
    accept_out: *mut bool,
) -> JayStatus {
    guard(|| {
        let src = str_arg(source, "source")?;
        let suite = parse_suite(str_arg(suite_json, "suite_json")?)?;
        let family: CriticFamily = str_arg(critic, "critic")?.parse()?;
        if accept_out.is_null() {
            return Err(Failure(JayStatus::NullArgument, "accept_out is null".into()));
        }
        let polarity = if buggy { Polarity::BuggyCode } else { Polarity::CorrectCode };
        let verdict = judge(CriticKind::new(family, polarity), &SourceProgram::new("input", src), &suite, fuel);
        *accept_out = verdict.accept;
        Ok(())
    })
}

/// A loaded fixer model with its vocabulary.
pub struct JayFixer {
    model: Seq2Seq,
    vocab: Vocab,
    repr: RepresentationConfig,
}

/// Load a fixer checkpoint and the vocabulary it was trained with.
///
/// # Safety
/// Paths are nul-terminated; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn jay_fixer_load(
    checkpoint_path: *const c_char,
    vocab_path: *const c_char,
    out: *mut *mut JayFixer,
) -> JayStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(JayStatus::NullArgument, "out is null".into()));
        }
        let model = Seq2Seq::load(Path::new(str_arg(checkpoint_path, "checkpoint_path")?))?;
        let vocab = Vocab::load(Path::new(str_arg(vocab_path, "vocab_path")?))?;
        if model.config.vocab_size != vocab.len() {
            return Err(Failure(JayStatus::Data, "checkpoint and vocabulary sizes differ".into()));
        }
        let repr = RepresentationConfig {
            max_input_len: model.config.max_source_len,
            max_target_len: model.config.max_target_len,
            ..RepresentationConfig::default()
        };
        *out = Box::into_raw(Box::new(JayFixer { model, vocab, repr }));
        Ok(())
    })
}

/// Replace `line_count` lines starting at 1-based `start_line` with each of
/// `beam` decoded candidates. Writes a JSON array of
/// `{rank, log_prob, replacement, text, region}` objects in beam order.
///
/// # Safety
/// `fixer` comes from [`jay_fixer_load`]; `source` is nul-terminated;
/// `candidates_out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn jay_fixer_repair(
    fixer: *const JayFixer,
    source: *const c_char,
    start_line: u32,
    line_count: u32,
    beam: u32,
    candidates_out: *mut *mut c_char,
) -> JayStatus {
    guard(|| {
        let fixer = fixer.as_ref().ok_or_else(|| Failure(JayStatus::NullArgument, "fixer is null".into()))?;
        let src = str_arg(source, "source")?;
        if beam == 0 {
            return Err(Failure(JayStatus::Usage, "beam must be at least 1".into()));
        }
        let lines = src.lines().count();
        let region = LineRegion { start: start_line as usize, len: line_count as usize };
        if region.start == 0 || region.start + region.len > lines + 1 {
            return Err(Failure(JayStatus::Data, format!("lines {start_line}+{line_count} lie outside the {lines}-line program")));
        }
        let props = propose(&fixer.model, &fixer.vocab, &fixer.repr, src, region, beam as usize)?
            .map_err(|e| Failure(JayStatus::Data, e.to_string()))?;
        put_string(candidates_out, serde_json::to_string(&props).expect("serializable"))
    })
}

/// Release a fixer. Null is ignored.
///
/// # Safety
/// `fixer` is null or comes from [`jay_fixer_load`] and has not been freed.
#[no_mangle]
pub unsafe extern "C" fn jay_fixer_free(fixer: *mut JayFixer) {
    if !fixer.is_null() {
        drop(Box::from_raw(fixer));
    }
}
