use super::{Diagnostic, DiagnosticKind, LocationSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Fn,
    Let,
    If,
    Else,
    While,
    Return,
    True,
    False,
    IntTy,
    BoolTy,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Arrow,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Bang,
    AndAnd,
    OrOr,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            other => format!("`{}`", other.lexeme()),
        }
    }

    pub fn lexeme(&self) -> String {
        let s = match self {
            Tok::Ident(s) => return s.clone(),
            Tok::Int(v) => return v.to_string(),
            Tok::Fn => "fn",
            Tok::Let => "let",
            Tok::If => "if",
            Tok::Else => "else",
            Tok::While => "while",
            Tok::Return => "return",
            Tok::True => "true",
            Tok::False => "false",
            Tok::IntTy => "int",
            Tok::BoolTy => "bool",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Arrow => "->",
            Tok::Assign => "=",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Bang => "!",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
        };
        s.to_string()
    }
}

/// All keywords and punctuation of the language, in a fixed order.
pub const FIXED_LEXEMES: &[&str] = &[
    "fn", "let", "if", "else", "while", "return", "true", "false", "int", "bool", "(", ")", "{",
    "}", "[", "]", ",", ";", ":", "->", "=", "==", "!=", "<", "<=", ">", ">=", "+", "-", "*", "/",
    "%", "!", "&&", "||",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "fn" => Tok::Fn,
        "let" => Tok::Let,
        "if" => Tok::If,
        "else" => Tok::Else,
        "while" => Tok::While,
        "return" => Tok::Return,
        "true" => Tok::True,
        "false" => Tok::False,
        "int" => Tok::IntTy,
        "bool" => Tok::BoolTy,
        _ => return None,
    })
}

pub fn lex(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let err = |line: usize, message: String| Diagnostic {
        kind: DiagnosticKind::LexError,
        span: LocationSpan::line(line),
        message,
    };
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'\n' => {
                line += 1;
                i += 1;
            }
            b' ' | b'\t' | b'\r' => i += 1,
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let text = &src[start..i];
                let value = text
                    .parse::<i64>()
                    .map_err(|_| err(line, format!("integer literal `{text}` out of range")))?;
                out.push(Token { tok: Tok::Int(value), line });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &src[start..i];
                let tok = keyword(word).unwrap_or_else(|| Tok::Ident(word.to_string()));
                out.push(Token { tok, line });
            }
            _ => {
                let next = bytes.get(i + 1).copied();
                let (tok, width) = match (c, next) {
                    (b'-', Some(b'>')) => (Tok::Arrow, 2),
                    (b'=', Some(b'=')) => (Tok::EqEq, 2),
                    (b'!', Some(b'=')) => (Tok::NotEq, 2),
                    (b'<', Some(b'=')) => (Tok::Le, 2),
                    (b'>', Some(b'=')) => (Tok::Ge, 2),
                    (b'&', Some(b'&')) => (Tok::AndAnd, 2),
                    (b'|', Some(b'|')) => (Tok::OrOr, 2),
                    (b'(', _) => (Tok::LParen, 1),
                    (b')', _) => (Tok::RParen, 1),
                    (b'{', _) => (Tok::LBrace, 1),
                    (b'}', _) => (Tok::RBrace, 1),
                    (b'[', _) => (Tok::LBracket, 1),
                    (b']', _) => (Tok::RBracket, 1),
                    (b',', _) => (Tok::Comma, 1),
                    (b';', _) => (Tok::Semi, 1),
                    (b':', _) => (Tok::Colon, 1),
                    (b'=', _) => (Tok::Assign, 1),
                    (b'<', _) => (Tok::Lt, 1),
                    (b'>', _) => (Tok::Gt, 1),
                    (b'+', _) => (Tok::Plus, 1),
                    (b'-', _) => (Tok::Minus, 1),
                    (b'*', _) => (Tok::Star, 1),
                    (b'/', _) => (Tok::Slash, 1),
                    (b'%', _) => (Tok::Percent, 1),
                    (b'!', _) => (Tok::Bang, 1),
                    _ => {
                        let ch = src[i..].chars().next().unwrap_or('?');
                        return Err(err(line, format!("unexpected character `{ch}`")));
                    }
                };
                out.push(Token { tok, line });
                i += width;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_operators_and_lines() {
        let toks = lex("a <= b\n&& !c -> x").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("a".into()),
                Tok::Le,
                Tok::Ident("b".into()),
                Tok::AndAnd,
                Tok::Bang,
                Tok::Ident("c".into()),
                Tok::Arrow,
                Tok::Ident("x".into()),
            ]
        );
        assert_eq!(toks[3].line, 2);
    }

    #[test]
    fn rejects_stray_characters() {
        let d = lex("x = 1;\ny = $;").unwrap_err();
        assert_eq!(d.kind, DiagnosticKind::LexError);
        assert_eq!(d.span.start_line, 2);
    }

    #[test]
    fn skips_comments() {
        let toks = lex("// hi\nreturn 1; // trailing").unwrap();
        assert_eq!(toks.len(), 3);
        assert_eq!(toks[0].line, 2);
    }

    #[test]
    fn integer_overflow_is_a_lex_error() {
        assert!(lex("99999999999999999999").is_err());
    }
}
