//! Syntax tree for Jay programs.
//!
//! Every node carries the line span it was parsed from. Spans are ignored by
//! [`Program::normalized`] and by equality checks on normalized trees.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Inclusive, 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocationSpan {
    pub start_line: usize,
    pub end_line: usize,
}

impl LocationSpan {
    pub fn new(start_line: usize, end_line: usize) -> Self {
        debug_assert!(start_line >= 1 && start_line <= end_line);
        Self { start_line, end_line }
    }

    pub fn line(line: usize) -> Self {
        Self::new(line, line)
    }

    pub fn len(&self) -> usize {
        self.end_line - self.start_line + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, other: &LocationSpan) -> bool {
        self.start_line <= other.start_line && other.end_line <= self.end_line
    }

    pub fn join(self, other: LocationSpan) -> Self {
        Self {
            start_line: self.start_line.min(other.start_line),
            end_line: self.end_line.max(other.end_line),
        }
    }
}

impl fmt::Display for LocationSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start_line, self.end_line)
    }
}

impl Default for LocationSpan {
    fn default() -> Self {
        Self { start_line: 1, end_line: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Type {
    Int,
    Bool,
    IntArray,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("int"),
            Type::Bool => f.write_str("bool"),
            Type::IntArray => f.write_str("int[]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub functions: Vec<Function>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Type,
    pub body: Block,
    pub span: LocationSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub span: LocationSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: LocationSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Let {
        name: String,
        ty: Option<Type>,
        init: Expr,
    },
    Assign {
        target: String,
        index: Option<Expr>,
        value: Expr,
    },
    If {
        cond: Expr,
        then_block: Block,
        else_block: Option<Block>,
    },
    While {
        cond: Expr,
        body: Block,
    },
    Return(Expr),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: LocationSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Array(Vec<Expr>),
    Paren(Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub const ARITHMETIC: [BinOp; 5] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Rem];
    pub const COMPARISON: [BinOp; 6] =
        [BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge, BinOp::Eq, BinOp::Ne];
    pub const LOGICAL: [BinOp; 2] = [BinOp::And, BinOp::Or];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter. All binary operators are left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }

    /// The operator class used by operator-replacement mutations.
    pub fn class(self) -> &'static [BinOp] {
        if Self::ARITHMETIC.contains(&self) {
            &Self::ARITHMETIC
        } else if Self::COMPARISON.contains(&self) {
            &Self::COMPARISON
        } else {
            &Self::LOGICAL
        }
    }
}

impl Expr {
    pub fn new(kind: ExprKind, span: LocationSpan) -> Self {
        Self { kind, span }
    }

    /// Integer expression; negative values become a negation node so the
    /// printed form reparses to the same tree.
    pub fn int(value: i64, span: LocationSpan) -> Self {
        if value < 0 {
            let inner = Expr::new(ExprKind::Int(value.unsigned_abs() as i64), span);
            Expr::new(ExprKind::Unary(UnOp::Neg, Box::new(inner)), span)
        } else {
            Expr::new(ExprKind::Int(value), span)
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Var(_) => vec![],
            ExprKind::Unary(_, e) | ExprKind::Paren(e) => vec![e],
            ExprKind::Binary(_, l, r) | ExprKind::Index(l, r) => vec![l, r],
            ExprKind::Call(_, args) | ExprKind::Array(args) => args.iter().collect(),
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expr> {
        match &mut self.kind {
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Var(_) => vec![],
            ExprKind::Unary(_, e) | ExprKind::Paren(e) => vec![e],
            ExprKind::Binary(_, l, r) | ExprKind::Index(l, r) => vec![l, r],
            ExprKind::Call(_, args) | ExprKind::Array(args) => args.iter_mut().collect(),
        }
    }

    /// Pre-order walk over this expression and all subexpressions.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        f(self);
        for c in self.children_mut() {
            c.walk_mut(f);
        }
    }

    fn normalize(&mut self) {
        self.span = LocationSpan::default();
        while let ExprKind::Paren(inner) = &mut self.kind {
            let inner = std::mem::replace(inner.as_mut(), Expr::new(ExprKind::Int(0), self.span));
            *self = inner;
            self.span = LocationSpan::default();
        }
        for c in self.children_mut() {
            c.normalize();
        }
    }
}

impl Stmt {
    /// Expressions that belong to this statement itself, excluding any nested statements.
    pub fn own_exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Let { init, .. } => vec![init],
            StmtKind::Assign { index, value, .. } => index.iter().chain(Some(value)).collect(),
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => vec![cond],
            StmtKind::Return(e) | StmtKind::Expr(e) => vec![e],
        }
    }

    pub fn own_exprs_mut(&mut self) -> Vec<&mut Expr> {
        match &mut self.kind {
            StmtKind::Let { init, .. } => vec![init],
            StmtKind::Assign { index, value, .. } => index.iter_mut().chain(Some(value)).collect(),
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => vec![cond],
            StmtKind::Return(e) | StmtKind::Expr(e) => vec![e],
        }
    }

    pub fn blocks(&self) -> Vec<&Block> {
        match &self.kind {
            StmtKind::If { then_block, else_block, .. } => {
                std::iter::once(then_block).chain(else_block.as_ref()).collect()
            }
            StmtKind::While { body, .. } => vec![body],
            _ => vec![],
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Block> {
        match &mut self.kind {
            StmtKind::If { then_block, else_block, .. } => {
                std::iter::once(then_block).chain(else_block.as_mut()).collect()
            }
            StmtKind::While { body, .. } => vec![body],
            _ => vec![],
        }
    }

    fn normalize(&mut self) {
        self.span = LocationSpan::default();
        for e in self.own_exprs_mut() {
            e.normalize();
        }
        for b in self.blocks_mut() {
            b.normalize();
        }
    }
}

impl Block {
    fn normalize(&mut self) {
        self.span = LocationSpan::default();
        for s in &mut self.stmts {
            s.normalize();
        }
    }
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Copy with spans reset and redundant parentheses removed.
    pub fn normalized(&self) -> Program {
        let mut p = self.clone();
        for f in &mut p.functions {
            f.span = LocationSpan::default();
            f.body.normalize();
        }
        p
    }

    /// Pre-order visit of every statement with its block nesting depth
    /// (function bodies are depth 1).
    pub fn visit_stmts<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt, usize)) {
        fn go<'a>(block: &'a Block, depth: usize, f: &mut dyn FnMut(&'a Stmt, usize)) {
            for s in &block.stmts {
                f(s, depth);
                for b in s.blocks() {
                    go(b, depth + 1, f);
                }
            }
        }
        for func in &self.functions {
            go(&func.body, 1, f);
        }
    }
}

/// Structural equality ignoring spans, formatting and redundant parentheses.
pub fn ast_equal_normalized(a: &Program, b: &Program) -> bool {
    a.normalized() == b.normalized()
}
