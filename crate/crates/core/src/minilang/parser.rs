use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::{Diagnostic, DiagnosticKind};

/// Parse Jay source. Stops at the first lexical or syntactic error.
pub fn parse_source(src: &str) -> Result<Program, Diagnostic> {
    let tokens = lex(src)?;
    let last_line = src.lines().count().max(1);
    let mut p = Parser { tokens, pos: 0, last_line };
    p.program()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    last_line: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + offset).map(|t| &t.tok)
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.line)
            .unwrap_or(self.last_line)
    }

    fn prev_line(&self) -> usize {
        self.tokens[self.pos.saturating_sub(1)].line
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        let found = match self.peek() {
            Some(t) => t.describe(),
            None => "end of input".to_string(),
        };
        Err(Diagnostic {
            kind: DiagnosticKind::ParseError,
            span: LocationSpan::line(self.line()),
            message: format!("expected {expected}, found {found}"),
        })
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<usize> {
        if self.eat(&tok) {
            Ok(self.prev_line())
        } else {
            self.error(&tok.describe())
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                Ok(name)
            }
            _ => self.error("identifier"),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut functions = Vec::new();
        while self.peek().is_some() {
            functions.push(self.function()?);
        }
        Ok(Program { functions })
    }

    fn ty(&mut self) -> PResult<Type> {
        match self.peek() {
            Some(Tok::IntTy) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::LBracket) && self.peek_at(1) == Some(&Tok::RBracket) {
                    self.pos += 2;
                    Ok(Type::IntArray)
                } else {
                    Ok(Type::Int)
                }
            }
            Some(Tok::BoolTy) => {
                self.pos += 1;
                Ok(Type::Bool)
            }
            _ => self.error("type"),
        }
    }

    fn function(&mut self) -> PResult<Function> {
        let start = self.line();
        self.expect(Tok::Fn)?;
        let name = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let pname = self.ident()?;
                self.expect(Tok::Colon)?;
                let ty = self.ty()?;
                params.push(Param { name: pname, ty });
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect(Tok::RParen)?;
                break;
            }
        }
        self.expect(Tok::Arrow)?;
        let ret = self.ty()?;
        let body = self.block()?;
        let span = LocationSpan::new(start, body.span.end_line);
        Ok(Function { name, params, ret, body, span })
    }

    fn block(&mut self) -> PResult<Block> {
        let start = self.expect(Tok::LBrace)?;
        let mut stmts = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::RBrace) => break,
                None => return self.error("`}`"),
                _ => stmts.push(self.stmt()?),
            }
        }
        let end = self.expect(Tok::RBrace)?;
        Ok(Block { stmts, span: LocationSpan::new(start, end) })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.line();
        let kind = match self.peek() {
            Some(Tok::Let) => {
                self.pos += 1;
                let name = self.ident()?;
                let ty = if self.eat(&Tok::Colon) { Some(self.ty()?) } else { None };
                self.expect(Tok::Assign)?;
                let init = self.expr()?;
                self.expect(Tok::Semi)?;
                StmtKind::Let { name, ty, init }
            }
            Some(Tok::If) => {
                self.pos += 1;
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let then_block = self.block()?;
                let else_block = if self.eat(&Tok::Else) { Some(self.block()?) } else { None };
                StmtKind::If { cond, then_block, else_block }
            }
            Some(Tok::While) => {
                self.pos += 1;
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let body = self.block()?;
                StmtKind::While { cond, body }
            }
            Some(Tok::Return) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::Semi)?;
                StmtKind::Return(e)
            }
            Some(Tok::Ident(_))
                if matches!(self.peek_at(1), Some(Tok::Assign) | Some(Tok::LBracket)) =>
            {
                self.assign_or_expr()?
            }
            _ => {
                let e = self.expr()?;
                self.expect(Tok::Semi)?;
                StmtKind::Expr(e)
            }
        };
        Ok(Stmt { kind, span: LocationSpan::new(start, self.prev_line()) })
    }

    /// `x = e;`, `a[i] = e;`, or an expression statement starting with an identifier.
    fn assign_or_expr(&mut self) -> PResult<StmtKind> {
        let save = self.pos;
        let target = self.ident()?;
        if self.eat(&Tok::Assign) {
            let value = self.expr()?;
            self.expect(Tok::Semi)?;
            return Ok(StmtKind::Assign { target, index: None, value });
        }
        self.expect(Tok::LBracket)?;
        let index = self.expr()?;
        self.expect(Tok::RBracket)?;
        if self.eat(&Tok::Assign) {
            let value = self.expr()?;
            self.expect(Tok::Semi)?;
            return Ok(StmtKind::Assign { target, index: Some(index), value });
        }
        self.pos = save;
        let e = self.expr()?;
        self.expect(Tok::Semi)?;
        Ok(StmtKind::Expr(e))
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek()? {
            Tok::OrOr => BinOp::Or,
            Tok::AndAnd => BinOp::And,
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Percent => BinOp::Rem,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            let span = lhs.span.join(rhs.span);
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let start = self.line();
        let op = match self.peek() {
            Some(Tok::Minus) => UnOp::Neg,
            Some(Tok::Bang) => UnOp::Not,
            _ => return self.postfix(),
        };
        self.pos += 1;
        let operand = self.unary()?;
        let span = LocationSpan::new(start, operand.span.end_line);
        Ok(Expr::new(ExprKind::Unary(op, Box::new(operand)), span))
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.eat(&Tok::LBracket) {
            let index = self.expr()?;
            let end = self.expect(Tok::RBracket)?;
            let span = LocationSpan::new(e.span.start_line, end);
            e = Expr::new(ExprKind::Index(Box::new(e), Box::new(index)), span);
        }
        Ok(e)
    }

    fn args(&mut self, close: Tok) -> PResult<Vec<Expr>> {
        let mut args = Vec::new();
        if self.eat(&close) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(close)?;
            return Ok(args);
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.line();
        let kind = match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                ExprKind::Int(v)
            }
            Some(Tok::True) => {
                self.pos += 1;
                ExprKind::Bool(true)
            }
            Some(Tok::False) => {
                self.pos += 1;
                ExprKind::Bool(false)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat(&Tok::LParen) {
                    ExprKind::Call(name, self.args(Tok::RParen)?)
                } else {
                    ExprKind::Var(name)
                }
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                ExprKind::Paren(Box::new(inner))
            }
            Some(Tok::LBracket) => {
                self.pos += 1;
                ExprKind::Array(self.args(Tok::RBracket)?)
            }
            _ => return self.error("expression"),
        };
        Ok(Expr::new(kind, LocationSpan::new(start, self.prev_line())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse_source("fn main() -> int { return 1; }").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.functions[0].body.stmts.len(), 1);
    }

    #[test]
    fn missing_return_expression_is_parse_error() {
        let d = parse_source("fn main() -> int { return ; }").unwrap_err();
        assert_eq!(d.kind, DiagnosticKind::ParseError);
        assert_eq!(d.span, LocationSpan::line(1));
    }

    #[test]
    fn precedence_and_associativity() {
        let p = parse_source("fn f(a: int, b: int) -> int { return a - b - 1 * 2; }").unwrap();
        let StmtKind::Return(e) = &p.functions[0].body.stmts[0].kind else { panic!() };
        let ExprKind::Binary(BinOp::Sub, lhs, rhs) = &e.kind else { panic!("{e:?}") };
        assert!(matches!(lhs.kind, ExprKind::Binary(BinOp::Sub, _, _)));
        assert!(matches!(rhs.kind, ExprKind::Binary(BinOp::Mul, _, _)));
    }

    #[test]
    fn statement_spans_cover_blocks() {
        let src = "fn f(x: int) -> int {\n    if (x > 0) {\n        return 1;\n    } else {\n        return 2;\n    }\n}\n";
        let p = parse_source(src).unwrap();
        let s = &p.functions[0].body.stmts[0];
        assert_eq!(s.span, LocationSpan::new(2, 6));
        assert_eq!(p.functions[0].span, LocationSpan::new(1, 7));
    }

    #[test]
    fn indexed_assignment_and_index_expression_statement() {
        let p = parse_source("fn f(a: int[]) -> int { a[0] = 1; a[1]; return a[0]; }").unwrap();
        let stmts = &p.functions[0].body.stmts;
        assert!(matches!(stmts[0].kind, StmtKind::Assign { index: Some(_), .. }));
        assert!(matches!(stmts[1].kind, StmtKind::Expr(_)));
    }

    #[test]
    fn unterminated_block() {
        let d = parse_source("fn f() -> int {\n return 1;\n").unwrap_err();
        assert_eq!(d.kind, DiagnosticKind::ParseError);
    }
}
