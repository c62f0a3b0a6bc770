//! Repair with known fault regions, and patch assessment.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusEntry, Origin, SampleStore};
use crate::error::{Error, Result};
use crate::generate::{propose, Proposal};
use crate::mechanical::{bug_samples, enumerate_bugs, Rule};
use crate::minilang::{ast_equal_normalized, diff_hunk, run_tests, LineRegion, Program, SourceProgram, TestSuite};
use crate::model::Seq2Seq;
use crate::representation::{RepresentationConfig, Vocab};
use crate::seeding::derived_rng;

/// A buggy program with its ground-truth fault region and reference fix.
#[derive(Debug, Clone)]
pub struct RepairTask {
    pub name: String,
    pub buggy: SourceProgram,
    /// Lines of `buggy` whose replacement yields the reference fix.
    pub region: LineRegion,
    /// Without a reference no candidate can be judged correct.
    pub reference: Option<Program>,
    pub suite: TestSuite,
}

impl RepairTask {
    /// A task for a buggy corpus entry; `None` without a parseable reference fix.
    pub fn from_entry(entry: &CorpusEntry) -> Option<RepairTask> {
        let fix = entry.reference_fix.as_ref()?;
        let reference = fix.compile().ok()?;
        let (region, _) = diff_hunk(&entry.program.text, &fix.text);
        Some(RepairTask {
            name: entry.program.name.clone(),
            buggy: entry.program.clone(),
            region,
            reference: Some(reference),
            suite: entry.suite.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchAssessment {
    pub rank: usize,
    pub log_prob: f64,
    pub compiles: bool,
    pub plausible: bool,
    pub correct: bool,
}

/// Beam-decode up to `k` replacements for the fault region, each spliced into
/// the buggy program. Empty when the input cannot be represented.
pub fn repair(
    fixer: &Seq2Seq,
    vocab: &Vocab,
    repr: &RepresentationConfig,
    task: &RepairTask,
    k: usize,
) -> Result<Vec<Proposal>> {
    if k == 0 {
        return Err(Error::Usage("beam width must be at least 1".into()));
    }
    match propose(fixer, vocab, repr, &task.buggy.text, task.region, k)? {
        Ok(p) => Ok(p),
        Err(e) => {
            log::warn!("task {}: {e}", task.name);
            Ok(Vec::new())
        }
    }
}

/// Compile, test and compare each candidate. A later check only runs when the
/// earlier one succeeded, so correct implies plausible implies compiles.
pub fn assess(candidates: &[Proposal], task: &RepairTask, fuel: u64) -> Vec<PatchAssessment> {
    candidates
        .iter()
        .map(|c| {
            let mut a = PatchAssessment { rank: c.rank, log_prob: c.log_prob, compiles: false, plausible: false, correct: false };
            if let Ok(ast) = SourceProgram::new(&task.name, c.text.as_str()).compile() {
                a.compiles = true;
                a.plausible = run_tests(&ast, &task.suite, fuel).all_pass();
                a.correct = a.plausible && task.reference.as_ref().is_some_and(|r| ast_equal_normalized(&ast, r));
            }
            a
        })
        .collect()
}

/// A plausible candidate that differs from the reference, kept for human review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewCandidate {
    pub rank: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub region: LineRegion,
    pub assessments: Vec<PatchAssessment>,
    pub first_correct: Option<usize>,
    pub first_plausible: Option<usize>,
    pub review: Vec<ReviewCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub beam: usize,
    pub tasks: usize,
    /// Tasks with a correct candidate.
    pub correct: usize,
    /// Tasks with a plausible candidate.
    pub plausible: usize,
    pub candidates: usize,
    pub compiling_candidates: usize,
    /// Percentage of all generated candidates that compile; 0 when none were generated.
    pub compilability: f64,
    /// `correct_curve[r - 1]` counts tasks whose first correct candidate has rank at most `r`.
    pub correct_curve: Vec<usize>,
    pub plausible_curve: Vec<usize>,
    pub results: Vec<TaskResult>,
}

fn curve(firsts: impl Iterator<Item = Option<usize>>, k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for r in firsts.flatten() {
        for slot in &mut c[r - 1..] {
            *slot += 1;
        }
    }
    c
}

/// Repair and assess every task; results keep task order.
pub fn evaluate(
    fixer: &Seq2Seq,
    vocab: &Vocab,
    repr: &RepresentationConfig,
    tasks: &[RepairTask],
    k: usize,
    fuel: u64,
) -> Result<EvalReport> {
    if tasks.is_empty() {
        return Err(Error::Data("no evaluation tasks".into()));
    }
    let results: Vec<TaskResult> = tasks
        .par_iter()
        .map(|t| {
            let cands = repair(fixer, vocab, repr, t, k)?;
            let assessments = assess(&cands, t, fuel);
            let first_correct = assessments.iter().find(|a| a.correct).map(|a| a.rank);
            let first_plausible = assessments.iter().find(|a| a.plausible).map(|a| a.rank);
            let review = cands
                .iter()
                .zip(&assessments)
                .filter(|(_, a)| a.plausible && !a.correct)
                .map(|(c, a)| ReviewCandidate { rank: a.rank, text: c.text.clone() })
                .collect();
            Ok(TaskResult { task: t.name.clone(), region: t.region, assessments, first_correct, first_plausible, review })
        })
        .collect::<Result<_>>()?;
    let candidates: usize = results.iter().map(|r| r.assessments.len()).sum();
    let compiling: usize = results.iter().flat_map(|r| &r.assessments).filter(|a| a.compiles).count();
    Ok(EvalReport {
        beam: k,
        tasks: tasks.len(),
        correct: results.iter().filter(|r| r.first_correct.is_some()).count(),
        plausible: results.iter().filter(|r| r.first_plausible.is_some()).count(),
        candidates,
        compiling_candidates: compiling,
        compilability: if candidates == 0 { 0.0 } else { 100.0 * compiling as f64 / candidates as f64 },
        correct_curve: curve(results.iter().map(|r| r.first_correct), k),
        plausible_curve: curve(results.iter().map(|r| r.first_plausible), k),
        results,
    })
}

impl EvalReport {
    /// `rank,correct,plausible` rows, one per beam rank.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("rank,correct,plausible\n");
        for (i, (c, p)) in self.correct_curve.iter().zip(&self.plausible_curve).enumerate() {
            writeln!(out, "{},{c},{p}", i + 1).expect("write to string");
        }
        out
    }

    /// Violations of correct ⟹ plausible ⟹ compiles and of the curve rules.
    pub fn consistency_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for r in &self.results {
            for a in &r.assessments {
                if (a.correct && !a.plausible) || (a.plausible && !a.compiles) {
                    errs.push(format!("{} rank {}: {:?}", r.task, a.rank, a));
                }
            }
        }
        for (name, c) in [("correct", &self.correct_curve), ("plausible", &self.plausible_curve)] {
            if c.windows(2).any(|w| w[0] > w[1]) {
                errs.push(format!("{name} curve decreases"));
            }
        }
        if self.correct_curve.last().copied().unwrap_or(0) != self.correct {
            errs.push("final correct count differs from total".into());
        }
        if self.plausible_curve.last().copied().unwrap_or(0) != self.plausible {
            errs.push("final plausible count differs from total".into());
        }
        errs
    }

    /// Write `report.json`, `report.csv` and the plausible-but-not-correct candidates under `review/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(self).expect("serializable report");
        let p = dir.join("report.json");
        std::fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("report.csv");
        std::fs::write(&p, self.curve_csv()).map_err(|e| Error::io(&p, e))?;
        let review = dir.join("review");
        for r in &self.results {
            for c in &r.review {
                std::fs::create_dir_all(&review).map_err(|e| Error::io(&review, e))?;
                let p = review.join(format!("{}.rank{}.jay", r.task, c.rank));
                std::fs::write(&p, &c.text).map_err(|e| Error::io(&p, e))?;
            }
        }
        Ok(())
    }
}

/// Mechanical bugs drawn with `seed` that compile, fail at least one test, and
/// whose Fix sample is absent from `exclude`. At most `limit`, seeded subsample.
#[allow(clippy::too_many_arguments)]
pub fn mechanical_tasks(
    entries: &[&CorpusEntry],
    rules: &[Rule],
    seed: u64,
    exclude: &SampleStore,
    vocab: &Vocab,
    repr: &RepresentationConfig,
    fuel: u64,
    limit: usize,
) -> Vec<RepairTask> {
    let mut seen = HashSet::new();
    let mut tasks = Vec::new();
    for bug in enumerate_bugs(entries, rules, seed).into_iter().flatten() {
        let Ok((fix, _)) = bug_samples(&bug, vocab, repr, Origin::Mechanical) else { continue };
        if exclude.contains(&fix) || !seen.insert(fix.key()) {
            continue;
        }
        let entry = entries.iter().find(|e| e.program.name == bug.base).expect("bug base is an entry");
        let Ok(ast) = bug.mutant.compile() else { continue };
        if run_tests(&ast, &entry.suite, fuel).all_pass() {
            continue;
        }
        tasks.push(RepairTask {
            name: format!("{}-{}-{}", bug.base, bug.span.start_line, bug.rule),
            buggy: bug.mutant.clone(),
            region: bug.mutant_region,
            reference: Some(entry.ast.clone()),
            suite: entry.suite.clone(),
        });
    }
    if tasks.len() > limit {
        let mut idx = sample(&mut derived_rng(seed, &["heldout"]), tasks.len(), limit).into_vec();
        idx.sort_unstable();
        tasks = idx.into_iter().map(|i| tasks[i].clone()).collect();
    }
    tasks
}
