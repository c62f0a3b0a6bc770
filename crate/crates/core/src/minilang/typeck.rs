use std::collections::HashMap;

use super::ast::*;
use super::{Diagnostic, DiagnosticKind};

/// Signature of a callable: parameter types and return type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub params: Vec<Type>,
    pub ret: Type,
}

/// Built-in functions available to every program.
pub const BUILTINS: &[(&str, &[Type], Type)] = &[
    ("len", &[Type::IntArray], Type::Int),
    ("array", &[Type::Int, Type::Int], Type::IntArray),
];

pub fn builtin_signature(name: &str) -> Option<Signature> {
    BUILTINS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, params, ret)| Signature { params: params.to_vec(), ret: *ret })
}

/// All callable signatures of a program: builtins first, then user functions in order.
pub fn signatures(program: &Program) -> Vec<(String, Signature)> {
    let mut out: Vec<(String, Signature)> = BUILTINS
        .iter()
        .map(|(n, p, r)| (n.to_string(), Signature { params: p.to_vec(), ret: *r }))
        .collect();
    for f in &program.functions {
        out.push((
            f.name.clone(),
            Signature { params: f.params.iter().map(|p| p.ty).collect(), ret: f.ret },
        ));
    }
    out
}

/// Check a parsed program. Returns every type error, sorted by span.
pub fn typecheck(program: &Program) -> Result<(), Vec<Diagnostic>> {
    let mut cx = Checker { funcs: HashMap::new(), scopes: Vec::new(), errors: Vec::new(), ret: Type::Int };
    for f in &program.functions {
        if builtin_signature(&f.name).is_some() {
            cx.err(f.span, format!("function `{}` shadows a builtin", f.name));
        } else if cx.funcs.contains_key(f.name.as_str()) {
            cx.err(f.span, format!("duplicate function `{}`", f.name));
        } else {
            let sig = Signature { params: f.params.iter().map(|p| p.ty).collect(), ret: f.ret };
            cx.funcs.insert(f.name.clone(), sig);
        }
    }
    for f in &program.functions {
        cx.function(f);
    }
    let mut errors = cx.errors;
    if errors.is_empty() {
        Ok(())
    } else {
        errors.sort_by(|a, b| a.span.cmp(&b.span).then_with(|| a.message.cmp(&b.message)));
        Err(errors)
    }
}

struct Checker {
    funcs: HashMap<String, Signature>,
    scopes: Vec<HashMap<String, Type>>,
    errors: Vec<Diagnostic>,
    ret: Type,
}

impl Checker {
    fn err(&mut self, span: LocationSpan, message: String) {
        self.errors.push(Diagnostic { kind: DiagnosticKind::TypeError, span, message });
    }

    fn lookup(&self, name: &str) -> Option<Type> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn function(&mut self, f: &Function) {
        self.ret = f.ret;
        let mut params = HashMap::new();
        for p in &f.params {
            if params.insert(p.name.clone(), p.ty).is_some() {
                self.err(f.span, format!("duplicate parameter `{}`", p.name));
            }
        }
        self.scopes = vec![params];
        self.block(&f.body);
        self.scopes.clear();
        if !block_returns(&f.body) {
            self.err(f.span, format!("function `{}` may finish without returning", f.name));
        }
    }

    fn block(&mut self, b: &Block) {
        self.scopes.push(HashMap::new());
        for s in &b.stmts {
            self.stmt(s);
        }
        self.scopes.pop();
    }

    fn expect_type(&mut self, e: &Expr, want: Type, what: &str) {
        if let Some(got) = self.expr(e) {
            if got != want {
                self.err(e.span, format!("{what}: expected {want}, found {got}"));
            }
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Let { name, ty, init } => {
                let got = self.expr(init);
                let declared = match (ty, got) {
                    (Some(t), Some(g)) if *t != g => {
                        self.err(s.span, format!("`{name}` declared {t} but initialized with {g}"));
                        Some(*t)
                    }
                    (Some(t), _) => Some(*t),
                    (None, g) => g,
                };
                let scope = self.scopes.last_mut().expect("scope");
                if scope.contains_key(name) {
                    self.err(s.span, format!("`{name}` is already declared in this scope"));
                } else if let Some(t) = declared {
                    scope.insert(name.clone(), t);
                } else {
                    // Unknown type after an earlier error: bind loosely to avoid cascades.
                    scope.insert(name.clone(), Type::Int);
                }
            }
            StmtKind::Assign { target, index, value } => {
                let Some(var_ty) = self.lookup(target) else {
                    self.err(s.span, format!("assignment to undeclared variable `{target}`"));
                    self.expr(value);
                    if let Some(i) = index {
                        self.expr(i);
                    }
                    return;
                };
                match index {
                    None => self.expect_type(value, var_ty, "assignment"),
                    Some(i) => {
                        if var_ty != Type::IntArray {
                            self.err(s.span, format!("cannot index `{target}` of type {var_ty}"));
                        }
                        self.expect_type(i, Type::Int, "array index");
                        self.expect_type(value, Type::Int, "array element assignment");
                    }
                }
            }
            StmtKind::If { cond, then_block, else_block } => {
                self.expect_type(cond, Type::Bool, "if condition");
                self.block(then_block);
                if let Some(b) = else_block {
                    self.block(b);
                }
            }
            StmtKind::While { cond, body } => {
                self.expect_type(cond, Type::Bool, "while condition");
                self.block(body);
            }
            StmtKind::Return(e) => {
                let ret = self.ret;
                self.expect_type(e, ret, "return value");
            }
            StmtKind::Expr(e) => {
                self.expr(e);
            }
        }
    }

    fn expr(&mut self, e: &Expr) -> Option<Type> {
        match &e.kind {
            ExprKind::Int(_) => Some(Type::Int),
            ExprKind::Bool(_) => Some(Type::Bool),
            ExprKind::Var(name) => {
                let t = self.lookup(name);
                if t.is_none() {
                    self.err(e.span, format!("unresolved name `{name}`"));
                }
                t
            }
            ExprKind::Paren(inner) => self.expr(inner),
            ExprKind::Unary(op, inner) => {
                let want = match op {
                    UnOp::Neg => Type::Int,
                    UnOp::Not => Type::Bool,
                };
                self.expect_type(inner, want, "operand");
                Some(want)
            }
            ExprKind::Binary(op, l, r) => {
                let lt = self.expr(l);
                let rt = self.expr(r);
                let (operand, result) = match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => {
                        (Some(Type::Int), Type::Int)
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => (Some(Type::Int), Type::Bool),
                    BinOp::And | BinOp::Or => (Some(Type::Bool), Type::Bool),
                    BinOp::Eq | BinOp::Ne => (None, Type::Bool),
                };
                match (operand, lt, rt) {
                    (Some(want), _, _) => {
                        for (side, t) in [(l, lt), (r, rt)] {
                            if let Some(t) = t {
                                if t != want {
                                    self.err(
                                        side.span,
                                        format!("operator `{}` expects {want}, found {t}", op.symbol()),
                                    );
                                }
                            }
                        }
                    }
                    (None, Some(a), Some(b)) => {
                        if a != b {
                            self.err(e.span, format!("cannot compare {a} with {b}"));
                        } else if a == Type::IntArray {
                            self.err(e.span, "arrays cannot be compared with `==`".to_string());
                        }
                    }
                    (None, _, _) => {}
                }
                Some(result)
            }
            ExprKind::Call(name, args) => {
                let sig = builtin_signature(name).or_else(|| self.funcs.get(name).cloned());
                let Some(sig) = sig else {
                    self.err(e.span, format!("unresolved name `{name}`"));
                    for a in args {
                        self.expr(a);
                    }
                    return None;
                };
                if sig.params.len() != args.len() {
                    self.err(
                        e.span,
                        format!("`{name}` takes {} arguments, {} given", sig.params.len(), args.len()),
                    );
                    for a in args {
                        self.expr(a);
                    }
                } else {
                    for (a, t) in args.iter().zip(&sig.params) {
                        self.expect_type(a, *t, "argument");
                    }
                }
                Some(sig.ret)
            }
            ExprKind::Index(base, index) => {
                self.expect_type(base, Type::IntArray, "indexed value");
                self.expect_type(index, Type::Int, "array index");
                Some(Type::Int)
            }
            ExprKind::Array(items) => {
                for item in items {
                    self.expect_type(item, Type::Int, "array element");
                }
                Some(Type::IntArray)
            }
        }
    }
}

fn block_returns(b: &Block) -> bool {
    b.stmts.iter().any(stmt_returns)
}

fn stmt_returns(s: &Stmt) -> bool {
    match &s.kind {
        StmtKind::Return(_) => true,
        StmtKind::If { then_block, else_block: Some(e), .. } => {
            block_returns(then_block) && block_returns(e)
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_source;
    use super::*;

    fn check(src: &str) -> Result<(), Vec<Diagnostic>> {
        typecheck(&parse_source(src).unwrap())
    }

    #[test]
    fn bool_returned_from_int_function() {
        let errs = check("fn f() -> int { return true; }").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].kind, DiagnosticKind::TypeError);
    }

    #[test]
    fn unresolved_function() {
        let errs = check("fn f() -> int { return g(); }").unwrap_err();
        assert!(errs[0].message.contains("unresolved"), "{errs:?}");
    }

    #[test]
    fn missing_return_path() {
        let errs = check("fn f(x: int) -> int { if (x > 0) { return 1; } }").unwrap_err();
        assert!(errs[0].message.contains("without returning"));
        assert!(check("fn f(x: int) -> int { if (x > 0) { return 1; } else { return 2; } }").is_ok());
    }

    #[test]
    fn scoping_rules() {
        assert!(check("fn f() -> int { if (true) { let x = 1; } return x; }").is_err());
        assert!(check("fn f() -> int { let x = 1; let x = 2; return x; }").is_err());
        assert!(check("fn f() -> int { let x = 1; if (true) { let x = 2; } return x; }").is_ok());
        assert!(check("fn f() -> int { y = 1; return 0; }").is_err());
    }

    #[test]
    fn arrays_and_builtins() {
        assert!(check("fn f(a: int[]) -> int { let b = array(len(a), 0); b[0] = a[0]; return b[0]; }").is_ok());
        assert!(check("fn f(a: int[]) -> int { return len(a, a); }").is_err());
        assert!(check("fn f(a: int) -> int { return a[0]; }").is_err());
        assert!(check("fn len(a: int) -> int { return a; }").is_err());
    }

    #[test]
    fn errors_sorted_by_span() {
        let src = "fn f() -> int {\n  let a: bool = 1;\n  return true;\n}\nfn g() -> bool {\n  return 1;\n}\n";
        let errs = check(src).unwrap_err();
        let lines: Vec<_> = errs.iter().map(|d| d.span.start_line).collect();
        let mut sorted = lines.clone();
        sorted.sort();
        assert_eq!(lines, sorted);
        assert_eq!(errs.len(), 3);
    }
}
