//! The Jay mini-language: a small statically typed imperative language with
//! `int`, `bool` and `int[]` values, used as the substrate for bug
//! injection, repair and the compile/test oracles.

pub mod ast;
pub mod interp;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod testing;
pub mod typeck;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::{ast_equal_normalized, LocationSpan, Program, Stmt, StmtKind, Type};
pub use interp::{interpret, ExecError, RuntimeErrorKind, Value, DEFAULT_FUEL};
pub use parser::parse_source;
pub use testing::{run_tests, CaseOutcome, TestCase, TestReport, TestSuite};
pub use typeck::typecheck;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticKind {
    LexError,
    ParseError,
    TypeError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub span: LocationSpan,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at line {}: {}", self.kind, self.span.start_line, self.message)
    }
}

/// A named program text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceProgram {
    pub name: String,
    pub text: String,
}

impl SourceProgram {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self { name: name.into(), text: text.into() }
    }

    /// 1-based line index: `lines()[0]` is line 1.
    pub fn lines(&self) -> Vec<&str> {
        self.text.lines().collect()
    }

    pub fn line_count(&self) -> usize {
        self.text.lines().count()
    }

    pub fn parse(&self) -> Result<Program, Diagnostic> {
        parse_source(&self.text)
    }

    /// Parse and typecheck. On failure returns the diagnostics (first parse
    /// error, or all type errors sorted by span).
    pub fn compile(&self) -> Result<Program, Vec<Diagnostic>> {
        let ast = self.parse().map_err(|d| vec![d])?;
        typecheck(&ast)?;
        Ok(ast)
    }
}

/// Parse a source program.
pub fn parse(src: &SourceProgram) -> Result<Program, Diagnostic> {
    src.parse()
}

/// Canonical text for a program.
pub fn pretty_print(name: &str, ast: &Program) -> SourceProgram {
    SourceProgram::new(name, pretty::print_program(ast))
}

/// Spans of every statement inside a function body, in source order
/// (pre-order: an `if` precedes the statements nested in it).
pub fn enumerate_statement_locations(ast: &Program) -> Vec<LocationSpan> {
    let mut out = Vec::new();
    ast.visit_stmts(&mut |s, _| out.push(s.span));
    out
}

/// Join lines back into text, each line newline-terminated.
pub fn join_lines<S: AsRef<str>>(lines: &[S]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(l.as_ref());
        out.push('\n');
    }
    out
}

/// Replace lines `start..start+len` (1-based `start`) with `replacement`'s lines.
/// Returns the new text and the line region the replacement occupies.
pub fn splice_lines(text: &str, start: usize, len: usize, replacement: &str) -> (String, LineRegion) {
    let lines: Vec<&str> = text.lines().collect();
    let start_idx = (start - 1).min(lines.len());
    let end_idx = (start_idx + len).min(lines.len());
    let new_lines: Vec<&str> = replacement.lines().collect();
    let mut out: Vec<&str> = Vec::with_capacity(lines.len() + new_lines.len());
    out.extend_from_slice(&lines[..start_idx]);
    out.extend_from_slice(&new_lines);
    out.extend_from_slice(&lines[end_idx..]);
    (join_lines(&out), LineRegion { start: start_idx + 1, len: new_lines.len() })
}

/// A possibly empty run of whole lines: `len` lines beginning at 1-based `start`.
/// An empty region marks the insertion point before line `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineRegion {
    pub start: usize,
    pub len: usize,
}

impl LineRegion {
    pub fn from_span(span: LocationSpan) -> Self {
        Self { start: span.start_line, len: span.len() }
    }

    pub fn to_span(self) -> Option<LocationSpan> {
        (self.len > 0).then(|| LocationSpan::new(self.start, self.start + self.len - 1))
    }

    /// Split text into (lines before, region lines, lines after).
    pub fn split<'t>(&self, text: &'t str) -> (Vec<&'t str>, Vec<&'t str>, Vec<&'t str>) {
        let lines: Vec<&str> = text.lines().collect();
        let s = (self.start - 1).min(lines.len());
        let e = (s + self.len).min(lines.len());
        (lines[..s].to_vec(), lines[s..e].to_vec(), lines[e..].to_vec())
    }
}

/// The single contiguous line hunk in which `a` and `b` differ, as regions of
/// each text. Both are empty when the texts are identical.
pub fn diff_hunk(a: &str, b: &str) -> (LineRegion, LineRegion) {
    let la: Vec<&str> = a.lines().collect();
    let lb: Vec<&str> = b.lines().collect();
    let mut prefix = 0;
    while prefix < la.len() && prefix < lb.len() && la[prefix] == lb[prefix] {
        prefix += 1;
    }
    let mut suffix = 0;
    while suffix < la.len() - prefix
        && suffix < lb.len() - prefix
        && la[la.len() - 1 - suffix] == lb[lb.len() - 1 - suffix]
    {
        suffix += 1;
    }
    (
        LineRegion { start: prefix + 1, len: la.len() - prefix - suffix },
        LineRegion { start: prefix + 1, len: lb.len() - prefix - suffix },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ast(src: &str) -> Program {
        parse_source(src).unwrap()
    }

    #[test]
    fn locations_minimal() {
        let p = ast("fn main() -> int { return 1; }");
        assert_eq!(enumerate_statement_locations(&p), vec![LocationSpan::new(1, 1)]);
    }

    #[test]
    fn locations_empty_body() {
        let p = ast("fn main() -> int {}");
        assert!(enumerate_statement_locations(&p).is_empty());
    }

    #[test]
    fn locations_if_else_nested() {
        let src = "fn f(x: int) -> int {\n    if (x > 0) {\n        x = 1;\n        x = 2;\n    } else {\n        x = 3;\n        x = 4;\n        x = 5;\n    }\n    return x;\n}\n";
        let spans = enumerate_statement_locations(&ast(src));
        // hand count: if(2-9), 3, 4, 6, 7, 8, return(10)
        let want: Vec<LocationSpan> = [(2, 9), (3, 3), (4, 4), (6, 6), (7, 7), (8, 8), (10, 10)]
            .iter()
            .map(|&(a, b)| LocationSpan::new(a, b))
            .collect();
        assert_eq!(spans, want);
    }

    #[test]
    fn normalized_equality() {
        let a = ast("fn f(a: int, b: int) -> int { let x = 0; x = a - b; return x; }");
        let b = ast("fn f(a: int, b: int) -> int {\n  let x = 0;\n\n    x=a-b;\n return x; }");
        let c = ast("fn f(a: int, b: int) -> int { let x = 0; x = a + b; return x; }");
        let d = ast("fn f(a: int, b: int) -> int { let x = 0; x=(a-b); return x; }");
        assert!(ast_equal_normalized(&a, &b));
        assert!(!ast_equal_normalized(&a, &c));
        assert!(ast_equal_normalized(&a, &d));
        assert!(ast_equal_normalized(&d, &a));
    }

    #[test]
    fn splice_and_region() {
        let text = "a\nb\nc\n";
        let (t, r) = splice_lines(text, 2, 1, "x\ny\n");
        assert_eq!(t, "a\nx\ny\nc\n");
        assert_eq!(r, LineRegion { start: 2, len: 2 });
        let (t, r) = splice_lines(text, 2, 1, "");
        assert_eq!(t, "a\nc\n");
        assert_eq!(r, LineRegion { start: 2, len: 0 });
        let (before, region, after) = LineRegion { start: 2, len: 1 }.split(text);
        assert_eq!((before, region, after), (vec!["a"], vec!["b"], vec!["c"]));
    }

    #[test]
    fn hunk_of_single_line_change() {
        let (ra, rb) = diff_hunk("a\nb\nc\n", "a\nB\nc\n");
        assert_eq!(ra, LineRegion { start: 2, len: 1 });
        assert_eq!(rb, LineRegion { start: 2, len: 1 });
        let (ra, rb) = diff_hunk("a\nc\n", "a\nb\nc\n");
        assert_eq!(ra, LineRegion { start: 2, len: 0 });
        assert_eq!(rb, LineRegion { start: 2, len: 1 });
    }
}
