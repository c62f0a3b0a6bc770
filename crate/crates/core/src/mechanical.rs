//! Rule-based corruption of correct programs, used to bootstrap both models.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::seq::{IteratorRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusEntry, Direction, Origin, TrainingSample};
use crate::minilang::ast::{BinOp, Expr, ExprKind, UnOp};
use crate::minilang::pretty::print_stmt;
use crate::minilang::typeck::{signatures, Signature};
use crate::minilang::{
    enumerate_statement_locations, pretty_print, splice_lines, LineRegion, LocationSpan, Program, SourceProgram,
    Stmt, StmtKind, Type,
};
use crate::representation::{build_sample, RepresentationConfig, RepresentationError, Vocab};
use crate::seeding::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    DeleteStatement,
    DuplicateStatement,
    NegateCondition,
    PerturbIntegerLiteral,
    ReplaceBinaryOperator,
    ReplaceCall,
    ReplaceVariable,
    SwapCallArgs,
}

impl Rule {
    /// Every rule, sorted by id.
    pub const ALL: [Rule; 8] = [
        Rule::DeleteStatement,
        Rule::DuplicateStatement,
        Rule::NegateCondition,
        Rule::PerturbIntegerLiteral,
        Rule::ReplaceBinaryOperator,
        Rule::ReplaceCall,
        Rule::ReplaceVariable,
        Rule::SwapCallArgs,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Rule::DeleteStatement => "delete-statement",
            Rule::DuplicateStatement => "duplicate-statement",
            Rule::NegateCondition => "negate-condition",
            Rule::PerturbIntegerLiteral => "perturb-integer-literal",
            Rule::ReplaceBinaryOperator => "replace-binary-operator",
            Rule::ReplaceCall => "replace-call",
            Rule::ReplaceVariable => "replace-variable",
            Rule::SwapCallArgs => "swap-call-args",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Rule::DeleteStatement => "remove the statement",
            Rule::DuplicateStatement => "repeat the statement",
            Rule::NegateCondition => "wrap an if/while condition in a negation",
            Rule::PerturbIntegerLiteral => "add or subtract one from an integer literal, or flip its sign",
            Rule::ReplaceBinaryOperator => "swap an arithmetic or comparison operator for another of its class",
            Rule::ReplaceCall => "call a different function of the same arity",
            Rule::ReplaceVariable => "use another in-scope variable of the same type",
            Rule::SwapCallArgs => "swap the first two arguments of a call",
        }
    }

    pub fn from_id(id: &str) -> Option<Rule> {
        Rule::ALL.into_iter().find(|r| r.id() == id)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// One corrupted program. `mutant_region` is where the corrupted lines sit in
/// the mutant; it is empty for deletions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MechanicalBug {
    pub base: String,
    pub base_text: String,
    pub mutant: SourceProgram,
    pub rule: Rule,
    pub span: LocationSpan,
    pub mutant_region: LineRegion,
}

impl MechanicalBug {
    pub fn base_region(&self) -> LineRegion {
        LineRegion::from_span(self.span)
    }

    /// The corrupted lines, newline-terminated.
    pub fn mutant_lines(&self) -> String {
        crate::minilang::join_lines(&self.mutant_region.split(&self.mutant.text).1)
    }

    /// The original lines, newline-terminated.
    pub fn base_lines(&self) -> String {
        crate::minilang::join_lines(&self.base_region().split(&self.base_text).1)
    }

    /// A unified-style diff of the hunk, for human review.
    pub fn diff(&self) -> String {
        let mut out = format!(
            "--- {}\n+++ {} ({} at {})\n@@ -{},{} +{},{} @@\n",
            self.base,
            self.base,
            self.rule,
            self.span,
            self.span.start_line,
            self.span.len(),
            self.mutant_region.start,
            self.mutant_region.len
        );
        for l in self.base_lines().lines() {
            out.push_str(&format!("-{l}\n"));
        }
        for l in self.mutant_lines().lines() {
            out.push_str(&format!("+{l}\n"));
        }
        out
    }
}

/// Variables visible at a statement, innermost last.
type Scope = Vec<(String, Type)>;

struct Located<'a> {
    stmt: &'a Stmt,
    depth: usize,
    scope: Scope,
}

fn infer(e: &Expr, scope: &Scope, sigs: &[(String, Signature)]) -> Option<Type> {
    match &e.kind {
        ExprKind::Int(_) => Some(Type::Int),
        ExprKind::Bool(_) => Some(Type::Bool),
        ExprKind::Var(n) => lookup(scope, n),
        ExprKind::Unary(UnOp::Neg, _) => Some(Type::Int),
        ExprKind::Unary(UnOp::Not, _) => Some(Type::Bool),
        ExprKind::Binary(op, _, _) => Some(if BinOp::ARITHMETIC.contains(op) { Type::Int } else { Type::Bool }),
        ExprKind::Call(n, _) => sigs.iter().find(|(s, _)| s == n).map(|(_, s)| s.ret),
        ExprKind::Index(..) => Some(Type::Int),
        ExprKind::Array(_) => Some(Type::IntArray),
        ExprKind::Paren(inner) => infer(inner, scope, sigs),
    }
}

fn lookup(scope: &Scope, name: &str) -> Option<Type> {
    scope.iter().rev().find(|(n, _)| n == name).map(|(_, t)| *t)
}

/// Find the first statement (pre-order) whose span equals `span`.
fn locate<'a>(ast: &'a Program, span: LocationSpan, sigs: &[(String, Signature)]) -> Option<Located<'a>> {
    fn go<'a>(
        stmts: &'a [Stmt],
        depth: usize,
        span: LocationSpan,
        scope: &mut Scope,
        sigs: &[(String, Signature)],
    ) -> Option<Located<'a>> {
        let mark = scope.len();
        for s in stmts {
            if s.span == span {
                return Some(Located { stmt: s, depth, scope: scope.clone() });
            }
            for b in s.blocks() {
                if let Some(found) = go(&b.stmts, depth + 1, span, scope, sigs) {
                    return Some(found);
                }
            }
            if let StmtKind::Let { name, ty, init } = &s.kind {
                if let Some(t) = ty.or_else(|| infer(init, scope, sigs)) {
                    scope.push((name.clone(), t));
                }
            }
        }
        scope.truncate(mark);
        None
    }
    for f in &ast.functions {
        let mut scope: Scope = f.params.iter().map(|p| (p.name.clone(), p.ty)).collect();
        if let Some(found) = go(&f.body.stmts, 1, span, &mut scope, sigs) {
            return Some(found);
        }
    }
    None
}

fn render(stmt: &Stmt, depth: usize) -> String {
    let mut out = String::new();
    print_stmt(stmt, depth, &mut out);
    out
}

/// Apply `f` to the `site`-th expression node (pre-order over the statement's own expressions).
fn edit_site(stmt: &Stmt, site: usize, f: &dyn Fn(&mut Expr)) -> Stmt {
    let mut s = stmt.clone();
    let mut n = 0;
    for root in s.own_exprs_mut() {
        root.walk_mut(&mut |e| {
            if n == site {
                f(e);
            }
            n += 1;
        });
    }
    s
}

fn own_nodes(stmt: &Stmt) -> Vec<&Expr> {
    let mut out = Vec::new();
    for root in stmt.own_exprs() {
        root.walk(&mut |e| out.push(e));
    }
    out
}

/// All distinct replacement texts a rule can produce for a statement.
fn variants(rule: Rule, loc: &Located, sigs: &[(String, Signature)]) -> Vec<String> {
    let stmt = loc.stmt;
    let depth = loc.depth;
    let mut out: Vec<Stmt> = Vec::new();
    match rule {
        Rule::DeleteStatement => return vec![String::new()],
        Rule::DuplicateStatement => return vec![render(stmt, depth).repeat(2)],
        Rule::NegateCondition => {
            if let StmtKind::If { cond, .. } | StmtKind::While { cond, .. } = &stmt.kind {
                let mut s = stmt.clone();
                if let StmtKind::If { cond: c, .. } | StmtKind::While { cond: c, .. } = &mut s.kind {
                    let paren = Expr::new(ExprKind::Paren(Box::new(cond.clone())), cond.span);
                    *c = Expr::new(ExprKind::Unary(UnOp::Not, Box::new(paren)), cond.span);
                }
                out.push(s);
            }
        }
        Rule::SwapCallArgs => {
            for (i, e) in own_nodes(stmt).into_iter().enumerate() {
                if let ExprKind::Call(_, args) = &e.kind {
                    if args.len() >= 2 {
                        out.push(edit_site(stmt, i, &|e| {
                            if let ExprKind::Call(_, args) = &mut e.kind {
                                args.swap(0, 1);
                            }
                        }));
                    }
                }
            }
        }
        Rule::ReplaceBinaryOperator => {
            for (i, e) in own_nodes(stmt).into_iter().enumerate() {
                if let ExprKind::Binary(op, _, _) = &e.kind {
                    if BinOp::LOGICAL.contains(op) {
                        continue;
                    }
                    for &alt in op.class().iter().filter(|&&o| o != *op) {
                        out.push(edit_site(stmt, i, &|e| {
                            if let ExprKind::Binary(o, _, _) = &mut e.kind {
                                *o = alt;
                            }
                        }));
                    }
                }
            }
        }
        Rule::PerturbIntegerLiteral => {
            for (i, e) in own_nodes(stmt).into_iter().enumerate() {
                if let ExprKind::Int(v) = e.kind {
                    let mut alts = vec![v.checked_add(1), v.checked_sub(1)];
                    if v != 0 {
                        alts.push(v.checked_neg());
                    }
                    for alt in alts.into_iter().flatten() {
                        out.push(edit_site(stmt, i, &|e| *e = Expr::int(alt, e.span)));
                    }
                }
            }
        }
        Rule::ReplaceVariable => {
            let mut visible: BTreeMap<&str, Type> = BTreeMap::new();
            for (n, t) in &loc.scope {
                visible.insert(n, *t);
            }
            let alternatives = |name: &str| -> Vec<String> {
                match visible.get(name) {
                    Some(t) => visible
                        .iter()
                        .filter(|(n, ty)| **n != name && *ty == t)
                        .map(|(n, _)| n.to_string())
                        .collect(),
                    None => vec![],
                }
            };
            if let StmtKind::Assign { target, .. } = &stmt.kind {
                for alt in alternatives(target) {
                    let mut s = stmt.clone();
                    if let StmtKind::Assign { target, .. } = &mut s.kind {
                        *target = alt;
                    }
                    out.push(s);
                }
            }
            for (i, e) in own_nodes(stmt).into_iter().enumerate() {
                if let ExprKind::Var(name) = &e.kind {
                    for alt in alternatives(name) {
                        out.push(edit_site(stmt, i, &|e| e.kind = ExprKind::Var(alt.clone())));
                    }
                }
            }
        }
        Rule::ReplaceCall => {
            for (i, e) in own_nodes(stmt).into_iter().enumerate() {
                if let ExprKind::Call(name, args) = &e.kind {
                    for (alt, sig) in sigs {
                        if alt != name && sig.params.len() == args.len() {
                            out.push(edit_site(stmt, i, &|e| {
                                if let ExprKind::Call(n, _) = &mut e.kind {
                                    *n = alt.clone();
                                }
                            }));
                        }
                    }
                }
            }
        }
    }
    out.iter().map(|s| render(s, depth)).collect()
}

/// Apply one rule at one statement. `None` when the rule does not apply or
/// every variant leaves the text unchanged. The choice among variants is
/// determined by `seed`.
///
/// Spans refer to the canonical printing of `ast`; the statement is located
/// there and its lines are replaced by the corrupted printing.
pub fn apply_rule(name: &str, ast: &Program, span: LocationSpan, rule: Rule, seed: u64) -> Option<MechanicalBug> {
    let base = pretty_print(name, ast);
    apply_rule_to(&base, ast, span, rule, seed)
}

fn apply_rule_to(
    base: &SourceProgram,
    ast: &Program,
    span: LocationSpan,
    rule: Rule,
    seed: u64,
) -> Option<MechanicalBug> {
    let sigs = signatures(ast);
    let loc = locate(ast, span, &sigs)?;
    let region = LineRegion::from_span(span);
    let original = crate::minilang::join_lines(&region.split(&base.text).1);
    if render(loc.stmt, loc.depth) != original {
        return None;
    }
    let candidates: BTreeSet<String> =
        variants(rule, &loc, &sigs).into_iter().filter(|v| *v != original).collect();
    let mut rng = derived_rng(seed, &[&base.name, &span.to_string(), rule.id()]);
    let chosen = candidates.into_iter().choose(&mut rng)?;
    let (text, mutant_region) = splice_lines(&base.text, region.start, region.len, &chosen);
    Some(MechanicalBug {
        base: base.name.clone(),
        base_text: base.text.clone(),
        mutant: SourceProgram::new(base.name.clone(), text),
        rule,
        span,
        mutant_region,
    })
}

/// Every bug the rules produce at each location, before capping. Ordered by
/// (program, span, rule).
pub fn enumerate_bugs(entries: &[&CorpusEntry], rules: &[Rule], seed: u64) -> Vec<Vec<MechanicalBug>> {
    let mut rules = rules.to_vec();
    rules.sort();
    rules.dedup();
    let mut sites: Vec<(&CorpusEntry, LocationSpan)> = Vec::new();
    let mut sorted: Vec<&CorpusEntry> = entries.to_vec();
    sorted.sort_by(|a, b| a.program.name.cmp(&b.program.name));
    for e in sorted {
        let mut spans = enumerate_statement_locations(&e.ast);
        spans.sort();
        for s in spans {
            sites.push((e, s));
        }
    }
    sites
        .par_iter()
        .map(|(e, span)| {
            rules.iter().filter_map(|&r| apply_rule_to(&e.program, &e.ast, *span, r, seed)).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct MechanicalDataset {
    pub bugs: Vec<MechanicalBug>,
    /// Fix and Break samples, interleaved pairwise in bug order.
    pub samples: Vec<TrainingSample>,
    /// Bugs whose samples did not fit the representation limits.
    pub rejected: Vec<(MechanicalBug, RepresentationError)>,
    pub locations: usize,
}

impl MechanicalDataset {
    pub fn per_rule(&self) -> BTreeMap<Rule, usize> {
        let mut m: BTreeMap<Rule, usize> = Rule::ALL.iter().map(|&r| (r, 0)).collect();
        for b in &self.bugs {
            *m.entry(b.rule).or_default() += 1;
        }
        m
    }
}

/// The Fix (mutant to original) and Break (original to mutant) samples for a bug.
pub fn bug_samples(
    bug: &MechanicalBug,
    vocab: &Vocab,
    cfg: &RepresentationConfig,
    origin: Origin,
) -> Result<(TrainingSample, TrainingSample), RepresentationError> {
    let fix = build_sample(
        vocab,
        cfg,
        Direction::Fix,
        &bug.mutant.text,
        bug.mutant_region,
        &bug.base_text,
        bug.base_region(),
        origin,
        &bug.base,
        bug.span,
    )?;
    let brk = build_sample(
        vocab,
        cfg,
        Direction::Break,
        &bug.base_text,
        bug.base_region(),
        &bug.mutant.text,
        bug.mutant_region,
        origin,
        &bug.base,
        bug.span,
    )?;
    Ok((fix, brk))
}

/// Corrupt every location of every correct entry with every rule, keep at most
/// `per_location_cap` bugs per location (seeded subsample), and emit paired
/// samples. Duplicate pairs are dropped.
pub fn generate_mechanical_dataset(
    entries: &[&CorpusEntry],
    rules: &[Rule],
    per_location_cap: usize,
    seed: u64,
    vocab: &Vocab,
    cfg: &RepresentationConfig,
) -> MechanicalDataset {
    let per_location = enumerate_bugs(entries, rules, seed);
    let mut out = MechanicalDataset { locations: per_location.len(), ..Default::default() };
    let mut seen = HashSet::new();
    for mut bugs in per_location {
        if bugs.len() > per_location_cap {
            let first = &bugs[0];
            let mut rng = derived_rng(seed, &[&first.base, &first.span.to_string(), "cap"]);
            let mut keep: Vec<usize> = (0..bugs.len()).collect::<Vec<_>>();
            keep.shuffle(&mut rng);
            keep.truncate(per_location_cap);
            keep.sort();
            bugs = keep.into_iter().map(|i| bugs[i].clone()).collect();
        }
        for bug in bugs {
            match bug_samples(&bug, vocab, cfg, Origin::Mechanical) {
                Ok((fix, brk)) => {
                    if seen.insert((fix.key(), brk.key())) {
                        out.samples.push(fix);
                        out.samples.push(brk);
                        out.bugs.push(bug);
                    }
                }
                Err(e) => out.rejected.push((bug, e)),
            }
        }
    }
    for (rule, n) in out.per_rule() {
        if n == 0 && rules.contains(&rule) {
            log::warn!("corruption rule {rule} produced no mutants");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse_source;

    const SRC: &str = "fn g(a: int, b: int, c: int) -> int {
    return a;
}

fn f(x: int, y: int) -> int {
    let z = g(x, y, 3);
    if (x < y) {
        z = z + 1;
    }
    return z;
}
";

    fn bug(span: (usize, usize), rule: Rule) -> Option<MechanicalBug> {
        apply_rule("p", &parse_source(SRC).unwrap(), LocationSpan::new(span.0, span.1), rule, 7)
    }

    #[test]
    fn swap_call_args_swaps_first_two() {
        let b = bug((6, 6), Rule::SwapCallArgs).unwrap();
        assert_eq!(b.mutant_lines(), "    let z = g(y, x, 3);\n");
        assert_eq!(b.mutant_region, LineRegion { start: 6, len: 1 });
    }

    #[test]
    fn swap_call_args_needs_two_args() {
        let ast = parse_source("fn h(a: int) -> int {\n    return h(a);\n}\n").unwrap();
        assert!(apply_rule("h", &ast, LocationSpan::line(2), Rule::SwapCallArgs, 1).is_none());
    }

    #[test]
    fn negate_condition_wraps() {
        let b = bug((7, 9), Rule::NegateCondition).unwrap();
        assert_eq!(b.mutant_lines(), "    if (!(x < y)) {\n        z = z + 1;\n    }\n");
        assert!(bug((6, 6), Rule::NegateCondition).is_none());
    }

    #[test]
    fn delete_and_duplicate() {
        let d = bug((8, 8), Rule::DeleteStatement).unwrap();
        assert_eq!(d.mutant_region, LineRegion { start: 8, len: 0 });
        assert_eq!(d.mutant.line_count(), 10);
        let dup = bug((8, 8), Rule::DuplicateStatement).unwrap();
        assert_eq!(dup.mutant_lines(), "        z = z + 1;\n        z = z + 1;\n");
    }

    #[test]
    fn variable_replacement_respects_scope_and_type() {
        // at `let z = ...` only x and y are visible ints
        for seed in 0..20 {
            let ast = parse_source(SRC).unwrap();
            let b = apply_rule("p", &ast, LocationSpan::line(6), Rule::ReplaceVariable, seed).unwrap();
            let line = b.mutant_lines();
            assert!(line == "    let z = g(y, y, 3);\n" || line == "    let z = g(x, x, 3);\n", "{line}");
        }
    }

    #[test]
    fn call_replacement_uses_same_arity() {
        // g has arity 3 and no other callable does
        assert!(bug((6, 6), Rule::ReplaceCall).is_none());
        let ast = parse_source("fn f(a: int[]) -> int {\n    return len(a);\n}\n").unwrap();
        assert!(apply_rule("f", &ast, LocationSpan::line(2), Rule::ReplaceCall, 0).is_some());
    }

    #[test]
    fn literal_and_operator_mutations_change_text() {
        let lit = bug((6, 6), Rule::PerturbIntegerLiteral).unwrap();
        assert!(["    let z = g(x, y, 2);\n", "    let z = g(x, y, 4);\n", "    let z = g(x, y, -3);\n"]
            .contains(&lit.mutant_lines().as_str()));
        let op = bug((8, 8), Rule::ReplaceBinaryOperator).unwrap();
        assert_ne!(op.mutant_lines(), "        z = z + 1;\n");
        assert!(parse_source(&op.mutant.text).is_ok());
    }

    #[test]
    fn deterministic_given_seed() {
        for rule in Rule::ALL {
            assert_eq!(bug((8, 8), rule), bug((8, 8), rule));
        }
    }

    #[test]
    fn rule_ids_roundtrip() {
        for r in Rule::ALL {
            assert_eq!(Rule::from_id(r.id()), Some(r));
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{}\"", r.id()));
        }
    }
}
