use std::path::PathBuf;

use jay_repair::corpus::{load_corpus, statement_count, Status};
use jay_repair::minilang::{
    ast_equal_normalized, diff_hunk, enumerate_statement_locations, interpret, parse_source,
    pretty_print, run_tests, Value, DEFAULT_FUEL,
};

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

#[test]
fn seed_corpus_loads_completely() {
    let c = load_corpus(&corpus_dir()).unwrap();
    assert!(c.rejections.is_empty(), "{:?}", c.rejections);
    assert_eq!(c.correct().len(), 20);
    assert_eq!(c.buggy().len(), 10);
    for e in c.buggy() {
        assert!(e.reference_fix.is_some(), "{}", e.program.name);
    }
}

#[test]
fn statement_counts_match_hand_counts() {
    let c = load_corpus(&corpus_dir()).unwrap();
    for e in &c.entries {
        let declared = e.declared_statements.expect("manifest records a count");
        assert_eq!(statement_count(&e.ast), declared, "{}", e.program.name);
    }
}

#[test]
fn corpus_files_are_canonically_formatted() {
    let c = load_corpus(&corpus_dir()).unwrap();
    for e in &c.entries {
        let printed = pretty_print(&e.program.name, &e.ast);
        assert_eq!(printed.text, e.program.text, "{} is not canonical", e.program.name);
        let reparsed = parse_source(&printed.text).unwrap();
        assert!(ast_equal_normalized(&reparsed, &e.ast));
    }
}

#[test]
fn buggy_entries_are_single_hunk_edits_of_their_fix() {
    let c = load_corpus(&corpus_dir()).unwrap();
    for e in c.buggy() {
        let fix = e.reference_fix.as_ref().unwrap();
        let (bug_region, fix_region) = diff_hunk(&e.program.text, &fix.text);
        assert_eq!((bug_region.len, fix_region.len), (1, 1), "{}", e.program.name);
    }
}

#[test]
fn gcd_suite_and_corruption() {
    let c = load_corpus(&corpus_dir()).unwrap();
    let gcd = c.entries.iter().find(|e| e.program.name == "gcd").unwrap();
    let report = run_tests(&gcd.ast, &gcd.suite, DEFAULT_FUEL);
    assert_eq!(report.passed, 5);
    assert_eq!(interpret(&gcd.ast, "gcd", &[Value::Int(12), Value::Int(18)], DEFAULT_FUEL), Ok(Value::Int(6)));

    let corrupted = parse_source(&gcd.program.text.replace("a % b", "a + b")).unwrap();
    let bad = run_tests(&corrupted, &gcd.suite, DEFAULT_FUEL);
    assert!(bad.failures() >= 1);
    assert_eq!(bad, run_tests(&corrupted, &gcd.suite, DEFAULT_FUEL));
}

#[test]
fn nested_location_enumeration_on_a_seed() {
    // binary_search, counted by hand: 10 statements; the while spans 4-14 and
    // contains the `let mid`, two ifs and their branches.
    let c = load_corpus(&corpus_dir()).unwrap();
    let bs = c.entries.iter().find(|e| e.program.name == "binary_search").unwrap();
    let spans: Vec<(usize, usize)> = enumerate_statement_locations(&bs.ast)
        .iter()
        .map(|s| (s.start_line, s.end_line))
        .collect();
    assert_eq!(
        spans,
        vec![(2, 2), (3, 3), (4, 14), (5, 5), (6, 8), (7, 7), (9, 13), (10, 10), (12, 12), (15, 15)]
    );
}

#[test]
fn status_violations_are_rejected_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let src = corpus_dir();
    let manifest: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(src.join("manifest.json")).unwrap()).unwrap();
    let correct: Vec<_> = manifest.into_iter().filter(|m| m["status"] == "correct").collect();
    for m in &correct {
        let name = m["name"].as_str().unwrap();
        for ext in ["jay", "tests.json"] {
            std::fs::copy(src.join(format!("{name}.{ext}")), dir.path().join(format!("{name}.{ext}"))).unwrap();
        }
    }
    // break one expected value
    let suite_path = dir.path().join("fib.tests.json");
    let text = std::fs::read_to_string(&suite_path).unwrap().replace("\"expect\": 55", "\"expect\": 56");
    std::fs::write(&suite_path, text).unwrap();
    std::fs::write(dir.path().join("manifest.json"), serde_json::to_string(&correct).unwrap()).unwrap();

    let c = load_corpus(dir.path()).unwrap();
    assert_eq!(c.entries.len(), 19);
    assert_eq!(c.rejections.len(), 1);
    assert_eq!(c.rejections[0].name, "fib");
    assert!(c.entries.iter().all(|e| e.status == Status::Correct));
}

#[test]
fn missing_suite_and_empty_dir() {
    let empty = tempfile::tempdir().unwrap();
    assert!(load_corpus(empty.path()).unwrap().entries.is_empty());

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.jay"), "fn a() -> int {\n    return 1;\n}\n").unwrap();
    std::fs::write(dir.path().join("manifest.json"), r#"[{"name": "a", "status": "correct"}]"#).unwrap();
    let c = load_corpus(dir.path()).unwrap();
    assert!(c.entries.is_empty());
    assert!(c.rejections[0].reason.contains("missing suite"));
}
