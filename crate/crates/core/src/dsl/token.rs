//! Hand-rolled lexer. `#` starts a line comment. Numbers are unsigned
//! decimal literals with optional fraction and exponent; negation is
//! handled in the parser.

use super::parser::ParseError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Colon,
    Arrow,
    Plus,
    Minus,
    Star,
    Slash,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn lex(source: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = source.chars().peekable();
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if let Some(c) = c {
                if c == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
            }
            c
        }};
    }

    loop {
        let span = Span { line, col };
        let c = match chars.peek() {
            Some(&c) => c,
            None => break,
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '{' | '}' | '(' | ')' | ',' | ';' | ':' | '+' | '*' | '/' | '=' => {
                bump!();
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    ':' => Tok::Colon,
                    '+' => Tok::Plus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '=' => Tok::Eq,
                    _ => unreachable!(),
                };
                out.push(Token { tok, span });
            }
            '-' => {
                bump!();
                if chars.peek() == Some(&'>') {
                    bump!();
                    out.push(Token { tok: Tok::Arrow, span });
                } else {
                    out.push(Token { tok: Tok::Minus, span });
                }
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        Some('"') => break,
                        Some('\n') | None => {
                            return Err(ParseError::syntax(span, "unterminated string literal"))
                        }
                        Some(c) => s.push(c),
                    }
                }
                out.push(Token { tok: Tok::Str(s), span });
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                if chars.peek() == Some(&'.') {
                    s.push('.');
                    bump!();
                    if !matches!(chars.peek(), Some(c) if c.is_ascii_digit()) {
                        return Err(ParseError::syntax(span, "expected digits after decimal point"));
                    }
                    while let Some(&c) = chars.peek() {
                        if c.is_ascii_digit() {
                            s.push(c);
                            bump!();
                        } else {
                            break;
                        }
                    }
                }
                if matches!(chars.peek(), Some('e') | Some('E')) {
                    s.push('e');
                    bump!();
                    if matches!(chars.peek(), Some('+') | Some('-')) {
                        s.push(*chars.peek().unwrap());
                        bump!();
                    }
                    if !matches!(chars.peek(), Some(c) if c.is_ascii_digit()) {
                        return Err(ParseError::syntax(span, "expected digits in exponent"));
                    }
                    while let Some(&c) = chars.peek() {
                        if c.is_ascii_digit() {
                            s.push(c);
                            bump!();
                        } else {
                            break;
                        }
                    }
                }
                let value: f64 = s
                    .parse()
                    .map_err(|_| ParseError::syntax(span, "malformed number literal"))?;
                out.push(Token { tok: Tok::Number(value), span });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push(Token { tok: Tok::Ident(s), span });
            }
            other => {
                return Err(ParseError::syntax(span, format!("unexpected character `{other}`")));
            }
        }
    }
    Ok(out)
}
