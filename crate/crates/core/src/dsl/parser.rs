//! Recursive-descent parser and typechecker.
//!
//! Parsing builds a spanned syntax tree; lowering interns terminals,
//! resolves infix operators against operand types (`*` becomes `Mul`,
//! `Scale`, or `MatMul`), and emits a topologically ordered [`ExprGraph`].
//! All errors carry a 1-based line and column.

use std::collections::HashMap;
use std::fmt;

use super::graph::{ExprGraph, ExprNode, NodeId, Op, ValueType};
use super::token::{lex, Span, Tok, Token};
use super::{LawKind, LawProgram, ParamDecl};

#[derive(Clone, Debug, PartialEq)]
pub enum ParseError {
    Syntax { line: u32, col: u32, message: String },
    Type { line: u32, col: u32, message: String },
    UnknownIdentifier { line: u32, col: u32, name: String },
    DuplicateParam { line: u32, col: u32, name: String },
}

impl ParseError {
    pub(super) fn syntax(span: Span, message: impl Into<String>) -> Self {
        ParseError::Syntax { line: span.line, col: span.col, message: message.into() }
    }

    fn type_err(span: Span, message: impl Into<String>) -> Self {
        ParseError::Type { line: span.line, col: span.col, message: message.into() }
    }

    pub fn line_col(&self) -> (u32, u32) {
        match self {
            ParseError::Syntax { line, col, .. }
            | ParseError::Type { line, col, .. }
            | ParseError::UnknownIdentifier { line, col, .. }
            | ParseError::DuplicateParam { line, col, .. } => (*line, *col),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Syntax { line, col, message } => {
                write!(f, "{line}:{col}: syntax error: {message}")
            }
            ParseError::Type { line, col, message } => {
                write!(f, "{line}:{col}: type error: {message}")
            }
            ParseError::UnknownIdentifier { line, col, name } => {
                write!(f, "{line}:{col}: unknown identifier `{name}`")
            }
            ParseError::DuplicateParam { line, col, name } => {
                write!(f, "{line}:{col}: duplicate parameter `{name}`")
            }
        }
    }
}

impl std::error::Error for ParseError {}

const RESERVED: &[&str] = &["law", "elastic", "plastic", "params", "forward", "let", "return", "mat"];

#[derive(Debug)]
enum Ast {
    Num(f64, Span),
    Ref(String, Span),
    Call(String, Vec<Ast>, Span),
    Neg(Box<Ast>, Span),
    Bin(char, Box<Ast>, Box<Ast>, Span),
}

impl Ast {
    fn span(&self) -> Span {
        match self {
            Ast::Num(_, s) | Ast::Ref(_, s) | Ast::Call(_, _, s) | Ast::Neg(_, s) | Ast::Bin(_, _, _, s) => *s,
        }
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: Span,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn span(&self) -> Span {
        self.toks.get(self.pos).map(|t| t.span).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<Span, ParseError> {
        let span = self.span();
        match self.next() {
            Some(t) if &t.tok == tok => Ok(t.span),
            Some(t) => Err(ParseError::syntax(t.span, format!("expected {what}"))),
            None => Err(ParseError::syntax(span, format!("expected {what}, found end of input"))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, Span), ParseError> {
        let span = self.span();
        match self.next() {
            Some(Token { tok: Tok::Ident(s), span }) => Ok((s, span)),
            Some(t) => Err(ParseError::syntax(t.span, format!("expected {what}"))),
            None => Err(ParseError::syntax(span, format!("expected {what}, found end of input"))),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<Span, ParseError> {
        let (name, span) = self.expect_ident(&format!("`{kw}`"))?;
        if name == kw {
            Ok(span)
        } else {
            Err(ParseError::syntax(span, format!("expected `{kw}`, found `{name}`")))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    // expr := term (("+"|"-") term)*
    fn expr(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => '+',
                Some(Tok::Minus) => '-',
                _ => break,
            };
            let span = self.span();
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs), span);
        }
        Ok(lhs)
    }

    // term := unary (("*"|"/") unary)*
    fn term(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => '*',
                Some(Tok::Slash) => '/',
                _ => break,
            };
            let span = self.span();
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs), span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Ast, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            let span = self.span();
            self.pos += 1;
            // A minus immediately applied to a bare literal folds into a
            // negative constant, so printed constants round-trip as single
            // nodes. `-(1.0)` stays an explicit negation.
            if let Some(Tok::Number(n)) = self.peek() {
                let n = *n;
                self.pos += 1;
                return Ok(Ast::Num(-n, span));
            }
            let inner = self.unary()?;
            return Ok(Ast::Neg(Box::new(inner), span));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Ast, ParseError> {
        let span = self.span();
        match self.next() {
            Some(Token { tok: Tok::Number(n), span }) => Ok(Ast::Num(n, span)),
            Some(Token { tok: Tok::Ident(name), span }) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&Tok::Comma) {
                                continue;
                            }
                            self.expect(&Tok::RParen, "`,` or `)`")?;
                            break;
                        }
                    }
                    Ok(Ast::Call(name, args, span))
                } else {
                    Ok(Ast::Ref(name, span))
                }
            }
            Some(Token { tok: Tok::LParen, .. }) => {
                let inner = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(t) => Err(ParseError::syntax(t.span, "expected an expression")),
            None => Err(ParseError::syntax(span, "expected an expression, found end of input")),
        }
    }
}

/// Graph builder with terminal interning and scope handling.
struct Lowerer<'a> {
    nodes: Vec<ExprNode>,
    scope: HashMap<String, NodeId>,
    const_pool: HashMap<u64, NodeId>,
    input_node: NodeId,
    input_name: &'a str,
}

impl<'a> Lowerer<'a> {
    fn push(&mut self, op: Op, args: Vec<NodeId>, ty: ValueType) -> NodeId {
        self.nodes.push(ExprNode { op, args, ty });
        self.nodes.len() - 1
    }

    fn constant(&mut self, value: f64) -> NodeId {
        let key = value.to_bits();
        if let Some(&id) = self.const_pool.get(&key) {
            return id;
        }
        let id = self.push(Op::Constant(value), vec![], ValueType::Scalar);
        self.const_pool.insert(key, id);
        id
    }

    fn ty(&self, id: NodeId) -> ValueType {
        self.nodes[id].ty
    }

    fn lower(&mut self, ast: &Ast) -> Result<NodeId, ParseError> {
        use ValueType::{Matrix, Scalar};
        match ast {
            Ast::Num(n, _) => Ok(self.constant(*n)),
            Ast::Ref(name, span) => {
                if name == self.input_name {
                    return Ok(self.input_node);
                }
                self.scope.get(name).copied().ok_or(ParseError::UnknownIdentifier {
                    line: span.line,
                    col: span.col,
                    name: name.clone(),
                })
            }
            Ast::Neg(inner, _) => {
                let a = self.lower(inner)?;
                let ty = self.ty(a);
                Ok(self.push(Op::Neg, vec![a], ty))
            }
            Ast::Bin(op, l, r, span) => {
                let a = self.lower(l)?;
                let b = self.lower(r)?;
                let (ta, tb) = (self.ty(a), self.ty(b));
                match op {
                    '+' | '-' => {
                        if ta != tb {
                            return Err(ParseError::type_err(
                                *span,
                                format!("`{op}` needs matching operand types, found {} and {}", name_of(ta), name_of(tb)),
                            ));
                        }
                        let prim = if *op == '+' { Op::Add } else { Op::Sub };
                        Ok(self.push(prim, vec![a, b], ta))
                    }
                    '*' => match (ta, tb) {
                        (Scalar, Scalar) => Ok(self.push(Op::Mul, vec![a, b], Scalar)),
                        (Scalar, Matrix) => Ok(self.push(Op::Scale, vec![a, b], Matrix)),
                        (Matrix, Scalar) => Ok(self.push(Op::Scale, vec![b, a], Matrix)),
                        (Matrix, Matrix) => Ok(self.push(Op::MatMul, vec![a, b], Matrix)),
                    },
                    '/' => match (ta, tb) {
                        (Scalar, Scalar) => Ok(self.push(Op::Div, vec![a, b], Scalar)),
                        _ => Err(ParseError::type_err(
                            *span,
                            "`/` divides scalars only; scale a matrix by a reciprocal instead",
                        )),
                    },
                    _ => unreachable!(),
                }
            }
            Ast::Call(name, args, span) => self.lower_call(name, args, *span),
        }
    }

    fn lower_call(&mut self, name: &str, args: &[Ast], span: Span) -> Result<NodeId, ParseError> {
        use ValueType::{Matrix, Scalar};

        let arity_err = |n: usize| {
            ParseError::type_err(span, format!("`{name}` takes {n} argument{}", if n == 1 { "" } else { "s" }))
        };

        let lowered: Vec<NodeId> = args.iter().map(|a| self.lower(a)).collect::<Result<_, _>>()?;
        let tys: Vec<ValueType> = lowered.iter().map(|&id| self.ty(id)).collect();

        let want = |idx: usize, ty: ValueType| -> Result<(), ParseError> {
            if tys[idx] != ty {
                Err(ParseError::type_err(
                    args[idx].span(),
                    format!("`{name}` argument {} must be a {}, found {}", idx + 1, name_of(ty), name_of(tys[idx])),
                ))
            } else {
                Ok(())
            }
        };

        let (op, ty) = match name {
            "transpose" | "inverse" | "polar_r" | "polar_s" | "sym_eigvals" => {
                if lowered.len() != 1 {
                    return Err(arity_err(1));
                }
                want(0, Matrix)?;
                let op = match name {
                    "transpose" => Op::Transpose,
                    "inverse" => Op::Inverse,
                    "polar_r" => Op::PolarR,
                    "polar_s" => Op::PolarS,
                    _ => Op::SymEigvals,
                };
                (op, Matrix)
            }
            "det" | "trace" => {
                if lowered.len() != 1 {
                    return Err(arity_err(1));
                }
                want(0, Matrix)?;
                (if name == "det" { Op::Det } else { Op::Trace }, Scalar)
            }
            "identity" => {
                if !lowered.is_empty() {
                    return Err(arity_err(0));
                }
                (Op::Identity, Matrix)
            }
            "exp" | "log" | "sqrt" | "tanh" | "sigmoid" => {
                if lowered.len() != 1 {
                    return Err(arity_err(1));
                }
                want(0, Scalar)?;
                let op = match name {
                    "exp" => Op::Exp,
                    "log" => Op::Log,
                    "sqrt" => Op::Sqrt,
                    "tanh" => Op::Tanh,
                    _ => Op::Sigmoid,
                };
                (op, Scalar)
            }
            "relu" => {
                if lowered.len() != 1 {
                    return Err(arity_err(1));
                }
                (Op::Relu, tys[0])
            }
            "min" | "max" => {
                if lowered.len() != 2 {
                    return Err(arity_err(2));
                }
                let ty = if tys.contains(&Matrix) { Matrix } else { Scalar };
                (if name == "min" { Op::Min } else { Op::Max }, ty)
            }
            "clamp" => {
                if lowered.len() != 3 {
                    return Err(arity_err(3));
                }
                want(1, Scalar)?;
                want(2, Scalar)?;
                (Op::Clamp, tys[0])
            }
            "pow" => {
                if lowered.len() != 2 {
                    return Err(arity_err(2));
                }
                want(0, Scalar)?;
                want(1, Scalar)?;
                (Op::Pow, Scalar)
            }
            "sym_reconstruct" => {
                if lowered.len() != 2 {
                    return Err(arity_err(2));
                }
                want(0, Matrix)?;
                want(1, Matrix)?;
                (Op::SymReconstruct, Matrix)
            }
            _ => {
                return Err(ParseError::UnknownIdentifier {
                    line: span.line,
                    col: span.col,
                    name: name.to_string(),
                })
            }
        };
        Ok(self.push(op, lowered, ty))
    }
}

fn name_of(ty: ValueType) -> &'static str {
    match ty {
        ValueType::Scalar => "scalar",
        ValueType::Matrix => "matrix",
    }
}

/// Parses and typechecks a law program.
pub fn parse_law(source: &str) -> Result<LawProgram, ParseError> {
    let toks = lex(source)?;
    let end = toks
        .last()
        .map(|t| Span { line: t.span.line, col: t.span.col + 1 })
        .unwrap_or(Span { line: 1, col: 1 });
    let mut p = Parser { toks, pos: 0, end };

    p.expect_keyword("law")?;
    let (kind_name, kind_span) = p.expect_ident("`elastic` or `plastic`")?;
    let kind = match kind_name.as_str() {
        "elastic" => LawKind::Elastic,
        "plastic" => LawKind::Plastic,
        other => {
            return Err(ParseError::syntax(kind_span, format!("expected `elastic` or `plastic`, found `{other}`")))
        }
    };
    let name_span = p.span();
    let name = match p.next() {
        Some(Token { tok: Tok::Str(s), .. }) => s,
        _ => return Err(ParseError::syntax(name_span, "expected a quoted law name")),
    };
    if name.is_empty()
        || !name.chars().next().unwrap().is_ascii_alphabetic() && !name.starts_with('_')
        || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return Err(ParseError::syntax(name_span, "law name must be identifier-shaped"));
    }
    p.expect(&Tok::LBrace, "`{`")?;

    // params { name = number; ... }
    p.expect_keyword("params")?;
    p.expect(&Tok::LBrace, "`{`")?;
    let mut params: Vec<ParamDecl> = Vec::new();
    while !p.eat(&Tok::RBrace) {
        let (pname, pspan) = p.expect_ident("a parameter name or `}`")?;
        if RESERVED.contains(&pname.as_str()) {
            return Err(ParseError::syntax(pspan, format!("`{pname}` is a reserved word")));
        }
        if params.iter().any(|d| d.name == pname) {
            return Err(ParseError::DuplicateParam { line: pspan.line, col: pspan.col, name: pname });
        }
        p.expect(&Tok::Eq, "`=`")?;
        let negative = p.eat(&Tok::Minus);
        let vspan = p.span();
        let init = match p.next() {
            Some(Token { tok: Tok::Number(n), .. }) => {
                if negative {
                    -n
                } else {
                    n
                }
            }
            _ => return Err(ParseError::syntax(vspan, "expected a number")),
        };
        if !init.is_finite() {
            return Err(ParseError::syntax(vspan, "parameter default must be finite"));
        }
        p.expect(&Tok::Semi, "`;`")?;
        params.push(ParamDecl { name: pname, init });
    }

    // forward(F: mat) -> mat { ... }
    p.expect_keyword("forward")?;
    p.expect(&Tok::LParen, "`(`")?;
    let (input_name, ispan) = p.expect_ident("the input name")?;
    if RESERVED.contains(&input_name.as_str()) {
        return Err(ParseError::syntax(ispan, format!("`{input_name}` is a reserved word")));
    }
    if params.iter().any(|d| d.name == input_name) {
        return Err(ParseError::syntax(ispan, format!("input `{input_name}` collides with a parameter")));
    }
    p.expect(&Tok::Colon, "`:`")?;
    p.expect_keyword("mat")?;
    p.expect(&Tok::RParen, "`)`")?;
    p.expect(&Tok::Arrow, "`->`")?;
    p.expect_keyword("mat")?;
    p.expect(&Tok::LBrace, "`{`")?;

    // Canonical node layout: parameters, then the input matrix, then body
    // nodes in order of appearance. Fixing the terminal positions up front
    // makes the pretty-print round trip reproduce graphs node for node.
    let mut low = Lowerer {
        nodes: Vec::new(),
        scope: HashMap::new(),
        const_pool: HashMap::new(),
        input_node: 0,
        input_name: &input_name,
    };
    for (idx, decl) in params.iter().enumerate() {
        let id = low.push(Op::Param(idx), vec![], ValueType::Scalar);
        low.scope.insert(decl.name.clone(), id);
    }
    low.input_node = low.push(Op::InputF, vec![], ValueType::Matrix);

    let output: NodeId;
    loop {
        let span = p.span();
        match p.next() {
            Some(Token { tok: Tok::Ident(kw), span }) if kw == "let" => {
                let (bname, bspan) = p.expect_ident("a binding name")?;
                if RESERVED.contains(&bname.as_str()) {
                    return Err(ParseError::syntax(bspan, format!("`{bname}` is a reserved word")));
                }
                if bname == input_name || low.scope.contains_key(&bname) {
                    return Err(ParseError::syntax(bspan, format!("`{bname}` is already bound")));
                }
                p.expect(&Tok::Eq, "`=`")?;
                let ast = p.expr()?;
                p.expect(&Tok::Semi, "`;`")?;
                let id = low.lower(&ast)?;
                low.scope.insert(bname, id);
                let _ = span;
            }
            Some(Token { tok: Tok::Ident(kw), span }) if kw == "return" => {
                let ast = p.expr()?;
                p.expect(&Tok::Semi, "`;`")?;
                let id = low.lower(&ast)?;
                if low.ty(id) != ValueType::Matrix {
                    return Err(ParseError::type_err(
                        ast.span(),
                        "law must return a matrix, found scalar",
                    ));
                }
                let _ = span;
                output = id;
                break;
            }
            Some(t) => {
                return Err(ParseError::syntax(t.span, "expected `let` or `return`"));
            }
            None => {
                return Err(ParseError::syntax(span, "expected `let` or `return`, found end of input"));
            }
        }
    }
    p.expect(&Tok::RBrace, "`}`")?;
    p.expect(&Tok::RBrace, "`}`")?;
    if let Some(t) = p.next() {
        return Err(ParseError::syntax(t.span, "unexpected trailing input"));
    }

    Ok(LawProgram {
        kind,
        name,
        params,
        body: ExprGraph { nodes: low.nodes, output },
        source_text: source.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_zero_law() {
        let p = parse_law(r#"law elastic "zero" { params {} forward(F: mat) -> mat { return 0.0 * F; } }"#)
            .unwrap();
        assert_eq!(p.kind, LawKind::Elastic);
        assert_eq!(p.name, "zero");
        assert!(p.params.is_empty());
        assert!(p.body.is_topologically_ordered());
    }

    #[test]
    fn scalar_return_is_type_error() {
        let err = parse_law(r#"law elastic "bad" { params {} forward(F: mat) -> mat { return det(F); } }"#)
            .unwrap_err();
        assert!(matches!(err, ParseError::Type { .. }), "{err}");
    }

    #[test]
    fn duplicate_param_rejected() {
        let err = parse_law(
            r#"law elastic "dup" { params { a = 1.0; a = 2.0; } forward(F: mat) -> mat { return F; } }"#,
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::DuplicateParam { .. }));
    }

    #[test]
    fn unknown_identifier_carries_position() {
        let err = parse_law(
            "law elastic \"u\" {\n  params {}\n  forward(F: mat) -> mat {\n    return F + G;\n  }\n}",
        )
        .unwrap_err();
        match err {
            ParseError::UnknownIdentifier { line, col, name } => {
                assert_eq!(name, "G");
                assert_eq!(line, 4);
                assert_eq!(col, 16);
            }
            other => panic!("expected unknown identifier, got {other}"),
        }
    }

    #[test]
    fn unknown_function_rejected() {
        let err = parse_law(
            r#"law elastic "f" { params {} forward(F: mat) -> mat { return svd(F); } }"#,
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::UnknownIdentifier { name, .. } if name == "svd"));
    }

    #[test]
    fn matrix_division_rejected() {
        let err = parse_law(
            r#"law elastic "d" { params {} forward(F: mat) -> mat { return F / 2.0; } }"#,
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::Type { .. }));
    }

    #[test]
    fn constants_are_interned() {
        let p = parse_law(
            r#"law elastic "c" { params {} forward(F: mat) -> mat { return 2.0 * F + 2.0 * transpose(F); } }"#,
        )
        .unwrap();
        let n_consts = p
            .body
            .nodes
            .iter()
            .filter(|n| matches!(n.op, Op::Constant(_)))
            .count();
        assert_eq!(n_consts, 1);
    }

    #[test]
    fn forward_reference_in_let_rejected() {
        let err = parse_law(
            r#"law elastic "fr" { params {} forward(F: mat) -> mat { let a = b + 1.0; let b = 2.0; return F; } }"#,
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::UnknownIdentifier { name, .. } if name == "b"));
    }
}
