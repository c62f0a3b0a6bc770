//! Fuel-bounded tree-walking interpreter.
//!
//! One unit of fuel is spent per statement executed, per expression node
//! evaluated, per function call, and per element allocated by `array`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;

/// Default per-test-case step budget.
pub const DEFAULT_FUEL: u64 = 100_000;

/// Maximum call nesting. The interpreter recurses on the native stack.
pub const MAX_CALL_DEPTH: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Array(Vec<i64>),
}

impl Value {
    pub fn ty(&self) -> Type {
        match self {
            Value::Int(_) => Type::Int,
            Value::Bool(_) => Type::Bool,
            Value::Array(_) => Type::IntArray,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Array(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuntimeErrorKind {
    DivisionByZero,
    IndexOutOfBounds,
    NegativeLength,
    StackOverflow,
    /// Missing entry function or argument mismatch at the call boundary.
    BadInvocation,
    /// A dynamic type mismatch. Unreachable for programs that typecheck.
    TypeMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecError {
    Runtime { kind: RuntimeErrorKind, message: String },
    FuelExhausted,
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecError::Runtime { kind, message } => write!(f, "{kind:?}: {message}"),
            ExecError::FuelExhausted => f.write_str("fuel exhausted"),
        }
    }
}

fn rt(kind: RuntimeErrorKind, message: impl Into<String>) -> ExecError {
    ExecError::Runtime { kind, message: message.into() }
}

/// Run `entry(args)` with at most `fuel` steps.
pub fn interpret(program: &Program, entry: &str, args: &[Value], fuel: u64) -> Result<Value, ExecError> {
    let func = program
        .function(entry)
        .ok_or_else(|| rt(RuntimeErrorKind::BadInvocation, format!("no function `{entry}`")))?;
    if func.params.len() != args.len()
        || func.params.iter().zip(args).any(|(p, a)| p.ty != a.ty())
    {
        return Err(rt(
            RuntimeErrorKind::BadInvocation,
            format!("arguments do not match the signature of `{entry}`"),
        ));
    }
    let mut m = Machine {
        funcs: program.functions.iter().map(|f| (f.name.as_str(), f)).collect(),
        fuel,
        used: 0,
        depth: 0,
    };
    m.call(func, args.to_vec())
}

struct Machine<'p> {
    funcs: HashMap<&'p str, &'p Function>,
    fuel: u64,
    used: u64,
    depth: usize,
}

enum Flow {
    Next,
    Return(Value),
}

type Env = Vec<HashMap<String, Value>>;

impl<'p> Machine<'p> {
    fn tick(&mut self, n: u64) -> Result<(), ExecError> {
        if self.used + n > self.fuel {
            self.used = self.fuel;
            return Err(ExecError::FuelExhausted);
        }
        self.used += n;
        Ok(())
    }

    fn call(&mut self, f: &'p Function, args: Vec<Value>) -> Result<Value, ExecError> {
        self.tick(1)?;
        if self.depth >= MAX_CALL_DEPTH {
            return Err(rt(RuntimeErrorKind::StackOverflow, format!("call depth exceeds {MAX_CALL_DEPTH}")));
        }
        self.depth += 1;
        let frame: HashMap<String, Value> =
            f.params.iter().map(|p| p.name.clone()).zip(args).collect();
        let mut env = vec![frame];
        let flow = self.block(&f.body, &mut env);
        self.depth -= 1;
        match flow? {
            Flow::Return(v) => Ok(v),
            Flow::Next => Err(rt(RuntimeErrorKind::TypeMismatch, format!("`{}` fell off its end", f.name))),
        }
    }

    fn block(&mut self, b: &'p Block, env: &mut Env) -> Result<Flow, ExecError> {
        env.push(HashMap::new());
        let mut result = Ok(Flow::Next);
        for s in &b.stmts {
            match self.stmt(s, env) {
                Ok(Flow::Next) => continue,
                other => {
                    result = other;
                    break;
                }
            }
        }
        env.pop();
        result
    }

    fn lookup_mut<'e>(env: &'e mut Env, name: &str) -> Result<&'e mut Value, ExecError> {
        env.iter_mut()
            .rev()
            .find_map(|s| s.get_mut(name))
            .ok_or_else(|| rt(RuntimeErrorKind::TypeMismatch, format!("unbound `{name}`")))
    }

    fn stmt(&mut self, s: &'p Stmt, env: &mut Env) -> Result<Flow, ExecError> {
        self.tick(1)?;
        match &s.kind {
            StmtKind::Let { name, init, .. } => {
                let v = self.expr(init, env)?;
                env.last_mut().expect("frame").insert(name.clone(), v);
            }
            StmtKind::Assign { target, index: None, value } => {
                let v = self.expr(value, env)?;
                *Self::lookup_mut(env, target)? = v;
            }
            StmtKind::Assign { target, index: Some(index), value } => {
                let i = self.int(index, env)?;
                let v = self.int(value, env)?;
                let Value::Array(items) = Self::lookup_mut(env, target)? else {
                    return Err(rt(RuntimeErrorKind::TypeMismatch, "indexed non-array"));
                };
                let slot = usize::try_from(i)
                    .ok()
                    .and_then(|i| items.get_mut(i))
                    .ok_or_else(|| rt(RuntimeErrorKind::IndexOutOfBounds, format!("index {i} out of bounds")))?;
                *slot = v;
            }
            StmtKind::If { cond, then_block, else_block } => {
                if self.bool(cond, env)? {
                    return self.block(then_block, env);
                } else if let Some(b) = else_block {
                    return self.block(b, env);
                }
            }
            StmtKind::While { cond, body } => {
                while self.bool(cond, env)? {
                    if let Flow::Return(v) = self.block(body, env)? {
                        return Ok(Flow::Return(v));
                    }
                    self.tick(1)?;
                }
            }
            StmtKind::Return(e) => return Ok(Flow::Return(self.expr(e, env)?)),
            StmtKind::Expr(e) => {
                self.expr(e, env)?;
            }
        }
        Ok(Flow::Next)
    }

    fn int(&mut self, e: &'p Expr, env: &mut Env) -> Result<i64, ExecError> {
        match self.expr(e, env)? {
            Value::Int(v) => Ok(v),
            other => Err(rt(RuntimeErrorKind::TypeMismatch, format!("expected int, got {other}"))),
        }
    }

    fn bool(&mut self, e: &'p Expr, env: &mut Env) -> Result<bool, ExecError> {
        match self.expr(e, env)? {
            Value::Bool(v) => Ok(v),
            other => Err(rt(RuntimeErrorKind::TypeMismatch, format!("expected bool, got {other}"))),
        }
    }

    fn expr(&mut self, e: &'p Expr, env: &mut Env) -> Result<Value, ExecError> {
        self.tick(1)?;
        Ok(match &e.kind {
            ExprKind::Int(v) => Value::Int(*v),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Var(name) => Self::lookup_mut(env, name)?.clone(),
            ExprKind::Paren(inner) => self.expr(inner, env)?,
            ExprKind::Unary(UnOp::Neg, inner) => Value::Int(self.int(inner, env)?.wrapping_neg()),
            ExprKind::Unary(UnOp::Not, inner) => Value::Bool(!self.bool(inner, env)?),
            ExprKind::Binary(BinOp::And, l, r) => {
                Value::Bool(self.bool(l, env)? && self.bool(r, env)?)
            }
            ExprKind::Binary(BinOp::Or, l, r) => {
                Value::Bool(self.bool(l, env)? || self.bool(r, env)?)
            }
            ExprKind::Binary(op @ (BinOp::Eq | BinOp::Ne), l, r) => {
                let a = self.expr(l, env)?;
                let b = self.expr(r, env)?;
                if a.ty() != b.ty() {
                    return Err(rt(RuntimeErrorKind::TypeMismatch, "comparison of mixed types"));
                }
                Value::Bool((a == b) == (*op == BinOp::Eq))
            }
            ExprKind::Binary(op, l, r) => {
                let a = self.int(l, env)?;
                let b = self.int(r, env)?;
                match op {
                    BinOp::Add => Value::Int(a.wrapping_add(b)),
                    BinOp::Sub => Value::Int(a.wrapping_sub(b)),
                    BinOp::Mul => Value::Int(a.wrapping_mul(b)),
                    BinOp::Div | BinOp::Rem if b == 0 => {
                        return Err(rt(RuntimeErrorKind::DivisionByZero, "division by zero"))
                    }
                    BinOp::Div => Value::Int(a.wrapping_div(b)),
                    BinOp::Rem => Value::Int(a.wrapping_rem(b)),
                    BinOp::Lt => Value::Bool(a < b),
                    BinOp::Le => Value::Bool(a <= b),
                    BinOp::Gt => Value::Bool(a > b),
                    BinOp::Ge => Value::Bool(a >= b),
                    BinOp::And | BinOp::Or | BinOp::Eq | BinOp::Ne => unreachable!(),
                }
            }
            ExprKind::Index(base, index) => {
                let arr = self.expr(base, env)?;
                let i = self.int(index, env)?;
                let Value::Array(items) = arr else {
                    return Err(rt(RuntimeErrorKind::TypeMismatch, "indexed non-array"));
                };
                let v = usize::try_from(i).ok().and_then(|i| items.get(i).copied());
                Value::Int(v.ok_or_else(|| {
                    rt(RuntimeErrorKind::IndexOutOfBounds, format!("index {i} out of bounds for length {}", items.len()))
                })?)
            }
            ExprKind::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    out.push(self.int(item, env)?);
                }
                Value::Array(out)
            }
            ExprKind::Call(name, args) => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.expr(a, env)?);
                }
                match (name.as_str(), values.as_slice()) {
                    ("len", [Value::Array(items)]) => Value::Int(items.len() as i64),
                    ("array", [Value::Int(n), Value::Int(fill)]) => {
                        if *n < 0 {
                            return Err(rt(RuntimeErrorKind::NegativeLength, format!("array length {n}")));
                        }
                        self.tick(*n as u64)?;
                        Value::Array(vec![*fill; *n as usize])
                    }
                    ("len" | "array", _) => {
                        return Err(rt(RuntimeErrorKind::TypeMismatch, format!("bad arguments to `{name}`")))
                    }
                    _ => {
                        let f = *self.funcs.get(name.as_str()).ok_or_else(|| {
                            rt(RuntimeErrorKind::TypeMismatch, format!("unknown function `{name}`"))
                        })?;
                        if f.params.len() != values.len() {
                            return Err(rt(RuntimeErrorKind::TypeMismatch, "arity mismatch"));
                        }
                        self.call(f, values)?
                    }
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_source;
    use super::*;

    const GCD: &str = "fn gcd(a: int, b: int) -> int {\n    while (b != 0) {\n        let t = b;\n        b = a % b;\n        a = t;\n    }\n    return a;\n}\n";

    #[test]
    fn gcd_of_12_18() {
        let p = parse_source(GCD).unwrap();
        let v = interpret(&p, "gcd", &[Value::Int(12), Value::Int(18)], DEFAULT_FUEL).unwrap();
        assert_eq!(v, Value::Int(6));
    }

    #[test]
    fn nontermination_exhausts_fuel() {
        let p = parse_source("fn loop() -> int { while (true) {} return 0; }").unwrap();
        assert_eq!(interpret(&p, "loop", &[], 1000), Err(ExecError::FuelExhausted));
    }

    #[test]
    fn division_by_zero() {
        let p = parse_source("fn f(x: int) -> int { return 1 / x; }").unwrap();
        match interpret(&p, "f", &[Value::Int(0)], DEFAULT_FUEL) {
            Err(ExecError::Runtime { kind: RuntimeErrorKind::DivisionByZero, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn index_out_of_bounds_and_negative_length() {
        let p = parse_source("fn f(a: int[], i: int) -> int { return a[i]; }\nfn g(n: int) -> int { return len(array(n, 0)); }").unwrap();
        let err = interpret(&p, "f", &[Value::Array(vec![1]), Value::Int(1)], 100).unwrap_err();
        assert!(matches!(err, ExecError::Runtime { kind: RuntimeErrorKind::IndexOutOfBounds, .. }));
        let err = interpret(&p, "g", &[Value::Int(-1)], 100).unwrap_err();
        assert!(matches!(err, ExecError::Runtime { kind: RuntimeErrorKind::NegativeLength, .. }));
        assert_eq!(interpret(&p, "g", &[Value::Int(3)], 100), Ok(Value::Int(3)));
        assert_eq!(interpret(&p, "g", &[Value::Int(1_000_000_000)], 100), Err(ExecError::FuelExhausted));
    }

    #[test]
    fn arrays_are_values() {
        let src = "fn set(a: int[]) -> int { a[0] = 9; return a[0]; }\nfn f() -> int { let a = [1, 2]; let x = set(a); return a[0] + x; }";
        let p = parse_source(src).unwrap();
        assert_eq!(interpret(&p, "f", &[], 1000), Ok(Value::Int(10)));
    }

    #[test]
    fn deep_recursion_is_a_runtime_error() {
        let p = parse_source("fn f(n: int) -> int { return f(n + 1); }").unwrap();
        let err = interpret(&p, "f", &[Value::Int(0)], u64::MAX).unwrap_err();
        assert!(matches!(err, ExecError::Runtime { kind: RuntimeErrorKind::StackOverflow, .. }));
    }

    #[test]
    fn bad_invocation() {
        let p = parse_source(GCD).unwrap();
        assert!(interpret(&p, "nope", &[], 10).is_err());
        assert!(interpret(&p, "gcd", &[Value::Bool(true), Value::Int(1)], 10).is_err());
    }

    #[test]
    fn fuel_monotone_on_gcd() {
        let p = parse_source(GCD).unwrap();
        let args = [Value::Int(1071), Value::Int(462)];
        let first_ok = (1..10_000)
            .find(|&f| interpret(&p, "gcd", &args, f).is_ok())
            .unwrap();
        for f in first_ok..first_ok + 50 {
            assert_eq!(interpret(&p, "gcd", &args, f), Ok(Value::Int(21)));
        }
        assert_eq!(interpret(&p, "gcd", &args, first_ok - 1), Err(ExecError::FuelExhausted));
    }
}
