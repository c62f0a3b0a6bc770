//! Test suites attached to programs, and the test runner.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ast::Program;
use super::interp::{interpret, ExecError, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub entry: String,
    pub args: Vec<Value>,
    pub expect: Value,
}

/// The cases for one program. Serialized as a bare JSON array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct TestSuite {
    pub cases: Vec<TestCase>,
}

impl TestSuite {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseOutcome {
    Pass,
    WrongValue,
    RuntimeError,
    FuelExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub outcomes: Vec<(String, CaseOutcome)>,
    pub passed: usize,
    pub wrong_value: usize,
    pub runtime_error: usize,
    pub fuel_exhausted: usize,
}

impl TestReport {
    pub fn all_pass(&self) -> bool {
        self.passed == self.outcomes.len()
    }

    pub fn failures(&self) -> usize {
        self.outcomes.len() - self.passed
    }
}

/// Run every case with its own `fuel` budget.
pub fn run_tests(ast: &Program, suite: &TestSuite, fuel: u64) -> TestReport {
    let mut report = TestReport {
        outcomes: Vec::with_capacity(suite.cases.len()),
        passed: 0,
        wrong_value: 0,
        runtime_error: 0,
        fuel_exhausted: 0,
    };
    for case in &suite.cases {
        let outcome = match interpret(ast, &case.entry, &case.args, fuel) {
            Ok(v) if v == case.expect => CaseOutcome::Pass,
            Ok(_) => CaseOutcome::WrongValue,
            Err(ExecError::FuelExhausted) => CaseOutcome::FuelExhausted,
            Err(ExecError::Runtime { .. }) => CaseOutcome::RuntimeError,
        };
        match outcome {
            CaseOutcome::Pass => report.passed += 1,
            CaseOutcome::WrongValue => report.wrong_value += 1,
            CaseOutcome::RuntimeError => report.runtime_error += 1,
            CaseOutcome::FuelExhausted => report.fuel_exhausted += 1,
        }
        report.outcomes.push((case.id.clone(), outcome));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::super::parse_source;
    use super::*;

    const SUITE: &str = r#"[
        {"id": "a", "entry": "f", "args": [2], "expect": 5},
        {"id": "b", "entry": "f", "args": [0], "expect": 0},
        {"id": "c", "entry": "g", "args": [[1, 2]], "expect": [2, 1]},
        {"id": "d", "entry": "h", "args": [true], "expect": false}
    ]"#;

    #[test]
    fn json_values_roundtrip() {
        let suite = TestSuite::from_json(SUITE).unwrap();
        assert_eq!(suite.cases.len(), 4);
        assert_eq!(suite.cases[2].args[0], Value::Array(vec![1, 2]));
        assert_eq!(suite.cases[3].expect, Value::Bool(false));
        let back = serde_json::to_string(&suite).unwrap();
        assert_eq!(TestSuite::from_json(&back).unwrap(), suite);
    }

    #[test]
    fn outcomes_are_counted() {
        let p = parse_source(
            "fn f(x: int) -> int { return 8 / x; }\nfn g(a: int[]) -> int[] { return [a[1], a[0]]; }\nfn h(b: bool) -> bool { while (b) {} return b; }",
        )
        .unwrap();
        let r = run_tests(&p, &TestSuite::from_json(SUITE).unwrap(), 1000);
        assert_eq!(
            r.outcomes.iter().map(|o| o.1).collect::<Vec<_>>(),
            vec![CaseOutcome::WrongValue, CaseOutcome::RuntimeError, CaseOutcome::Pass, CaseOutcome::FuelExhausted]
        );
        assert_eq!(r.passed + r.wrong_value + r.runtime_error + r.fuel_exhausted, 4);
        assert_eq!(r, run_tests(&p, &TestSuite::from_json(SUITE).unwrap(), 1000));
    }
}
