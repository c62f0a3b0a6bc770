//! Canonical formatting: four-space indentation, one statement per line,
//! minimal parentheses beyond those recorded in the tree.

use std::fmt::Write;

use super::ast::*;

pub const INDENT: &str = "    ";

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for (i, f) in p.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_function(f, &mut out);
    }
    out
}

fn print_function(f: &Function, out: &mut String) {
    let params: Vec<String> = f.params.iter().map(|p| format!("{}: {}", p.name, p.ty)).collect();
    let _ = writeln!(out, "fn {}({}) -> {} {{", f.name, params.join(", "), f.ret);
    for s in &f.body.stmts {
        print_stmt(s, 1, out);
    }
    out.push_str("}\n");
}

/// Print one statement (and any nested blocks) at the given depth.
pub fn print_stmt(s: &Stmt, depth: usize, out: &mut String) {
    let pad = INDENT.repeat(depth);
    match &s.kind {
        StmtKind::Let { name, ty: Some(t), init } => {
            let _ = writeln!(out, "{pad}let {name}: {t} = {};", print_expr(init));
        }
        StmtKind::Let { name, ty: None, init } => {
            let _ = writeln!(out, "{pad}let {name} = {};", print_expr(init));
        }
        StmtKind::Assign { target, index: None, value } => {
            let _ = writeln!(out, "{pad}{target} = {};", print_expr(value));
        }
        StmtKind::Assign { target, index: Some(i), value } => {
            let _ = writeln!(out, "{pad}{target}[{}] = {};", print_expr(i), print_expr(value));
        }
        StmtKind::If { cond, then_block, else_block } => {
            let _ = writeln!(out, "{pad}if ({}) {{", print_expr(cond));
            print_block_body(then_block, depth + 1, out);
            match else_block {
                Some(b) => {
                    let _ = writeln!(out, "{pad}}} else {{");
                    print_block_body(b, depth + 1, out);
                    let _ = writeln!(out, "{pad}}}");
                }
                None => {
                    let _ = writeln!(out, "{pad}}}");
                }
            }
        }
        StmtKind::While { cond, body } => {
            let _ = writeln!(out, "{pad}while ({}) {{", print_expr(cond));
            print_block_body(body, depth + 1, out);
            let _ = writeln!(out, "{pad}}}");
        }
        StmtKind::Return(e) => {
            let _ = writeln!(out, "{pad}return {};", print_expr(e));
        }
        StmtKind::Expr(e) => {
            let _ = writeln!(out, "{pad}{};", print_expr(e));
        }
    }
}

fn print_block_body(b: &Block, depth: usize, out: &mut String) {
    for s in &b.stmts {
        print_stmt(s, depth, out);
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    expr_into(e, &mut out);
    out
}

/// Precedence of the expression's outermost construct; atoms bind tightest.
fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, _, _) => op.precedence(),
        ExprKind::Unary(..) => 7,
        _ => 8,
    }
}

fn wrapped(e: &Expr, need_parens: bool, out: &mut String) {
    if need_parens {
        out.push('(');
        expr_into(e, out);
        out.push(')');
    } else {
        expr_into(e, out);
    }
}

fn expr_into(e: &Expr, out: &mut String) {
    match &e.kind {
        ExprKind::Int(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        ExprKind::Var(name) => out.push_str(name),
        ExprKind::Paren(inner) => {
            out.push('(');
            expr_into(inner, out);
            out.push(')');
        }
        ExprKind::Unary(op, inner) => {
            out.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
            });
            wrapped(inner, prec(inner) < 7, out);
        }
        ExprKind::Binary(op, l, r) => {
            let p = op.precedence();
            wrapped(l, prec(l) < p, out);
            let _ = write!(out, " {} ", op.symbol());
            wrapped(r, prec(r) <= p, out);
        }
        ExprKind::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr_into(a, out);
            }
            out.push(')');
        }
        ExprKind::Index(base, index) => {
            let atom = matches!(
                base.kind,
                ExprKind::Var(_) | ExprKind::Call(..) | ExprKind::Index(..) | ExprKind::Paren(_) | ExprKind::Array(_)
            );
            wrapped(base, !atom, out);
            out.push('[');
            expr_into(index, out);
            out.push(']');
        }
        ExprKind::Array(items) => {
            out.push('[');
            for (i, a) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr_into(a, out);
            }
            out.push(']');
        }
    }
}
