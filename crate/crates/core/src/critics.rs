//! Predicate critics that decide which generated programs become training data.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::minilang::{run_tests, Diagnostic, SourceProgram, TestReport, TestSuite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticFamily {
    None,
    Compiler,
    Tests,
}

impl CriticFamily {
    pub const ALL: [CriticFamily; 3] = [CriticFamily::None, CriticFamily::Compiler, CriticFamily::Tests];

    pub fn as_str(self) -> &'static str {
        match self {
            CriticFamily::None => "none",
            CriticFamily::Compiler => "compiler",
            CriticFamily::Tests => "tests",
        }
    }
}

impl fmt::Display for CriticFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CriticFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        CriticFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown critic '{s}', expected none, compiler or tests")))
    }
}

/// Which kind of program the critic is meant to let through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    CorrectCode,
    BuggyCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CriticKind {
    pub family: CriticFamily,
    pub polarity: Polarity,
}

impl CriticKind {
    pub fn new(family: CriticFamily, polarity: Polarity) -> Self {
        Self { family, polarity }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Evidence {
    NotChecked,
    CompileOk,
    CompileFail(Vec<Diagnostic>),
    TestsReport(TestReport),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticVerdict {
    pub accept: bool,
    pub evidence: Evidence,
}

/// Judge one candidate against the suite of its base program.
pub fn judge(kind: CriticKind, candidate: &SourceProgram, suite: &TestSuite, fuel: u64) -> CriticVerdict {
    if kind.family == CriticFamily::None {
        return CriticVerdict { accept: true, evidence: Evidence::NotChecked };
    }
    let ast = match candidate.compile() {
        Ok(ast) => ast,
        Err(diags) => return CriticVerdict { accept: false, evidence: Evidence::CompileFail(diags) },
    };
    if kind.family == CriticFamily::Compiler {
        return CriticVerdict { accept: true, evidence: Evidence::CompileOk };
    }
    let report = run_tests(&ast, suite, fuel);
    let accept = match kind.polarity {
        Polarity::CorrectCode => report.all_pass(),
        Polarity::BuggyCode => !report.all_pass(),
    };
    CriticVerdict { accept, evidence: Evidence::TestsReport(report) }
}

/// Kept and rejected counts, split by evidence class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub kept: usize,
    pub rejected: usize,
    pub not_checked: usize,
    pub compile_ok: usize,
    pub compile_fail: usize,
    pub tests_all_pass: usize,
    pub tests_failing: usize,
}

impl FilterCounts {
    pub fn add(&mut self, v: &CriticVerdict) {
        if v.accept {
            self.kept += 1;
        } else {
            self.rejected += 1;
        }
        match &v.evidence {
            Evidence::NotChecked => self.not_checked += 1,
            Evidence::CompileOk => self.compile_ok += 1,
            Evidence::CompileFail(_) => self.compile_fail += 1,
            Evidence::TestsReport(r) if r.all_pass() => self.tests_all_pass += 1,
            Evidence::TestsReport(_) => self.tests_failing += 1,
        }
    }

    pub fn merge(&mut self, other: &FilterCounts) {
        self.kept += other.kept;
        self.rejected += other.rejected;
        self.not_checked += other.not_checked;
        self.compile_ok += other.compile_ok;
        self.compile_fail += other.compile_fail;
        self.tests_all_pass += other.tests_all_pass;
        self.tests_failing += other.tests_failing;
    }
}

/// Judge every candidate; returns the accepted ones in input order, with their verdicts.
pub fn filter<T: Send + Sync>(
    kind: CriticKind,
    candidates: Vec<(SourceProgram, T)>,
    suite: &TestSuite,
    fuel: u64,
) -> (Vec<(SourceProgram, T, CriticVerdict)>, FilterCounts) {
    let verdicts: Vec<CriticVerdict> = candidates.par_iter().map(|(p, _)| judge(kind, p, suite, fuel)).collect();
    let mut counts = FilterCounts::default();
    let mut kept = Vec::new();
    for ((p, meta), v) in candidates.into_iter().zip(verdicts) {
        counts.add(&v);
        if v.accept {
            kept.push((p, meta, v));
        }
    }
    (kept, counts)
}
