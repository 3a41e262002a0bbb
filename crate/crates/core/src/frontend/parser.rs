//! Recursive-descent parser for kernels and protocols.
//!
//! ```text
//! kernel   := stmt (";" kernel)?
//! stmt     := "skip" | "sync"
//!           | "A" "[" num "]" ":=" num
//!           | "let" ident "=" "A" "[" num "]" "in" kernel
//!           | "if" "(" bool ")" "{" kernel "}" "else" "{" kernel "}"
//!           | "forU" ident "in" num ".." num "{" kernel "}"
//!           | "{" kernel "}"
//! protocol := pstmt (";" protocol)?
//! pstmt    := "skip" | "sync" | ("rd" | "wr") "[" num "]"
//!           | "if" "(" bool ")" "{" protocol "}" "else" "{" protocol "}"
//!           | ("forU" | "forS") ident "in" num ".." num "{" protocol "}"
//!           | "{" protocol "}"
//! bool     := conj ("||" conj)*
//! conj     := batom ("&&" batom)*
//! batom    := "true" | "false" | num rel num | "(" bool ")"
//! num      := term (("+" | "-") term)*
//! term     := atom (("*" | "/" | "%") atom)*
//! atom     := nat | ident | "tid" | "(" num ")"
//! ```
//!
//! The body of a `let` extends as far right as possible.

use crate::ast::{BoolExpr, Conn, Kernel, KernelKind, NumExpr, NumOp, Protocol, ProtocolKind, Rel, Span};

use super::lexer::{Keyword, Tok, Token};
use super::{ParseError, ParseOptions};

pub struct Parser<'o> {
    tokens: Vec<Token>,
    pos: usize,
    options: &'o ParseOptions,
}

impl<'o> Parser<'o> {
    pub fn new(tokens: Vec<Token>, options: &'o ParseOptions) -> Self {
        Parser {
            tokens,
            pos: 0,
            options,
        }
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.tokens[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn at_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Tok::Sym(s) if *s == sym)
    }

    fn at_kw(&self, kw: Keyword) -> bool {
        matches!(self.peek(), Tok::Kw(k) if *k == kw)
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let found = self.peek().describe();
        let expected: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
        ParseError::new(
            self.peek_span(),
            format!("unexpected {found}, expected {}", expected.join(" or ")),
            expected,
        )
    }

    fn expect_sym(&mut self, sym: &'static str) -> Result<Span, ParseError> {
        if self.at_sym(sym) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&[&format!("`{sym}`")]))
        }
    }

    fn expect_kw(&mut self, kw: Keyword) -> Result<Span, ParseError> {
        if self.at_kw(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&[&format!("`{}`", kw.as_str())]))
        }
    }

    fn expect_ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            Tok::Kw(kw @ (Keyword::Tid | Keyword::Array)) => Err(ParseError::new(
                self.peek_span(),
                format!("`{}` is reserved and cannot be bound", kw.as_str()),
                vec!["identifier".into()],
            )),
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    pub fn expect_eof(&mut self) -> Result<(), ParseError> {
        if matches!(self.peek(), Tok::Eof) {
            Ok(())
        } else {
            Err(self.unexpected(&["`;`", "end of input"]))
        }
    }

    pub fn kernel(&mut self) -> Result<Kernel, ParseError> {
        let first = self.stmt()?;
        if self.at_sym(";") {
            self.bump();
            let second = self.kernel()?;
            let span = first.span.to(second.span);
            Ok(Kernel::seq(first, second).with_span(span))
        } else {
            Ok(first)
        }
    }

    fn stmt(&mut self) -> Result<Kernel, ParseError> {
        let start = self.peek_span();
        let kind = match self.peek().clone() {
            Tok::Kw(Keyword::Skip) => {
                self.bump();
                KernelKind::Skip
            }
            Tok::Kw(Keyword::Sync) => {
                if self.options.strict_paper {
                    return Err(ParseError::new(
                        start,
                        "`sync` is not part of the unsynchronized fragment (strict-paper mode)",
                        vec![],
                    ));
                }
                self.bump();
                KernelKind::Sync
            }
            Tok::Kw(Keyword::Array) => {
                let index = self.array_index()?;
                self.expect_sym(":=")?;
                let payload = self.num()?;
                KernelKind::Write { index, payload }
            }
            Tok::Kw(Keyword::Let) => {
                self.bump();
                let binder = self.expect_ident()?;
                self.expect_sym("=")?;
                let index = self.array_index()?;
                self.expect_kw(Keyword::In)?;
                let body = self.kernel()?;
                KernelKind::Read {
                    binder,
                    index,
                    body: Box::new(body),
                }
            }
            Tok::Kw(Keyword::If) => {
                self.bump();
                let cond = self.condition()?;
                let then_branch = self.kernel_block()?;
                if !self.at_kw(Keyword::Else) {
                    return Err(ParseError::new(
                        self.peek_span(),
                        "conditional must have an `else` branch",
                        vec!["`else`".into()],
                    ));
                }
                self.bump();
                let else_branch = self.kernel_block()?;
                KernelKind::If {
                    cond,
                    then_branch: Box::new(then_branch),
                    else_branch: Box::new(else_branch),
                }
            }
            Tok::Kw(Keyword::ForU) => {
                self.bump();
                let (binder, lo, hi) = self.loop_header()?;
                let body = self.kernel_block()?;
                KernelKind::For {
                    binder,
                    lo,
                    hi,
                    body: Box::new(body),
                }
            }
            Tok::Kw(Keyword::ForS) => {
                return Err(ParseError::new(
                    start,
                    "`forS` is protocol syntax; kernels loop with `forU`",
                    vec!["`forU`".into()],
                ))
            }
            Tok::Sym("{") => {
                let inner = self.kernel_block()?;
                return Ok(inner.with_span(start.to(self.prev_span())));
            }
            _ => {
                return Err(self.unexpected(&[
                    "`skip`", "`sync`", "`A`", "`let`", "`if`", "`forU`", "`{`",
                ]))
            }
        };
        Ok(Kernel::new(kind).with_span(start.to(self.prev_span())))
    }

    fn kernel_block(&mut self) -> Result<Kernel, ParseError> {
        self.expect_sym("{")?;
        let inner = self.kernel()?;
        self.expect_sym("}")?;
        Ok(inner)
    }

    fn array_index(&mut self) -> Result<NumExpr, ParseError> {
        self.expect_kw(Keyword::Array)?;
        self.expect_sym("[")?;
        let index = self.num()?;
        self.expect_sym("]")?;
        Ok(index)
    }

    fn condition(&mut self) -> Result<BoolExpr, ParseError> {
        self.expect_sym("(")?;
        let cond = self.boolean()?;
        self.expect_sym(")")?;
        Ok(cond)
    }

    fn loop_header(&mut self) -> Result<(String, NumExpr, NumExpr), ParseError> {
        let binder = self.expect_ident()?;
        self.expect_kw(Keyword::In)?;
        let lo = self.num()?;
        self.expect_sym("..")?;
        let hi = self.num()?;
        Ok((binder, lo, hi))
    }

    pub fn protocol(&mut self) -> Result<Protocol, ParseError> {
        let first = self.pstmt()?;
        if self.at_sym(";") {
            self.bump();
            let second = self.protocol()?;
            let span = first.span.to(second.span);
            Ok(Protocol::seq_auto(first, second).with_span(span))
        } else {
            Ok(first)
        }
    }

    fn pstmt(&mut self) -> Result<Protocol, ParseError> {
        let start = self.peek_span();
        let kind = match self.peek().clone() {
            Tok::Kw(Keyword::Skip) => {
                self.bump();
                ProtocolKind::Skip
            }
            Tok::Kw(Keyword::Sync) => {
                self.bump();
                ProtocolKind::Sync
            }
            Tok::Kw(kw @ (Keyword::Rd | Keyword::Wr)) => {
                self.bump();
                self.expect_sym("[")?;
                let index = self.num()?;
                self.expect_sym("]")?;
                let mode = if kw == Keyword::Rd {
                    crate::ast::Mode::Rd
                } else {
                    crate::ast::Mode::Wr
                };
                ProtocolKind::Access { mode, index }
            }
            Tok::Kw(Keyword::If) => {
                self.bump();
                let cond = self.condition()?;
                let then_branch = self.protocol_block()?;
                if !self.at_kw(Keyword::Else) {
                    return Err(ParseError::new(
                        self.peek_span(),
                        "conditional must have an `else` branch",
                        vec!["`else`".into()],
                    ));
                }
                self.bump();
                let else_branch = self.protocol_block()?;
                ProtocolKind::If {
                    cond,
                    then_branch: Box::new(then_branch),
                    else_branch: Box::new(else_branch),
                }
            }
            Tok::Kw(kw @ (Keyword::ForU | Keyword::ForS)) => {
                self.bump();
                let (binder, lo, hi) = self.loop_header()?;
                let body = Box::new(self.protocol_block()?);
                if kw == Keyword::ForU {
                    ProtocolKind::For { binder, lo, hi, body }
                } else {
                    ProtocolKind::SFor { binder, lo, hi, body }
                }
            }
            Tok::Sym("{") => {
                let inner = self.protocol_block()?;
                return Ok(inner.with_span(start.to(self.prev_span())));
            }
            _ => {
                return Err(self.unexpected(&[
                    "`skip`", "`sync`", "`rd`", "`wr`", "`if`", "`forU`", "`forS`", "`{`",
                ]))
            }
        };
        Ok(Protocol::new(kind).with_span(start.to(self.prev_span())))
    }

    fn protocol_block(&mut self) -> Result<Protocol, ParseError> {
        self.expect_sym("{")?;
        let inner = self.protocol()?;
        self.expect_sym("}")?;
        Ok(inner)
    }

    pub fn boolean(&mut self) -> Result<BoolExpr, ParseError> {
        let mut lhs = self.conjunction()?;
        while self.at_sym("||") {
            self.bump();
            let rhs = self.conjunction()?;
            lhs = BoolExpr::conn(Conn::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<BoolExpr, ParseError> {
        let mut lhs = self.bool_atom()?;
        while self.at_sym("&&") {
            self.bump();
            let rhs = self.bool_atom()?;
            lhs = BoolExpr::conn(Conn::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn bool_atom(&mut self) -> Result<BoolExpr, ParseError> {
        match self.peek() {
            Tok::Kw(Keyword::True) => {
                self.bump();
                Ok(BoolExpr::True)
            }
            Tok::Kw(Keyword::False) => {
                self.bump();
                Ok(BoolExpr::False)
            }
            Tok::Sym("(") => {
                // `(` opens either a parenthesized condition or the left
                // operand of a comparison; try the former first.
                let saved = self.pos;
                self.bump();
                if let Ok(inner) = self.boolean() {
                    if self.at_sym(")") {
                        self.bump();
                        return Ok(inner);
                    }
                }
                self.pos = saved;
                self.comparison()
            }
            _ => self.comparison(),
        }
    }

    fn comparison(&mut self) -> Result<BoolExpr, ParseError> {
        let lhs = self.num()?;
        let rel = match self.peek() {
            Tok::Sym("=") => Rel::Eq,
            Tok::Sym("!=") => Rel::Ne,
            Tok::Sym("<") => Rel::Lt,
            Tok::Sym("<=") => Rel::Le,
            Tok::Sym(">") => Rel::Gt,
            Tok::Sym(">=") => Rel::Ge,
            _ => return Err(self.unexpected(&["`=`", "`!=`", "`<`", "`<=`", "`>`", "`>=`"])),
        };
        self.bump();
        let rhs = self.num()?;
        Ok(BoolExpr::cmp(rel, lhs, rhs))
    }

    pub fn num(&mut self) -> Result<NumExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => NumOp::Add,
                Tok::Sym("-") => NumOp::Monus,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = NumExpr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<NumExpr, ParseError> {
        let mut lhs = self.num_atom()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => NumOp::Mul,
                Tok::Sym("/") => NumOp::Div,
                Tok::Sym("%") => NumOp::Mod,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.num_atom()?;
            lhs = NumExpr::bin(op, lhs, rhs);
        }
    }

    fn num_atom(&mut self) -> Result<NumExpr, ParseError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(NumExpr::Lit(n))
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(NumExpr::Var(name))
            }
            Tok::Kw(Keyword::Tid) => {
                self.bump();
                Ok(NumExpr::Tid)
            }
            Tok::Kw(Keyword::Array) => Err(ParseError::new(
                self.peek_span(),
                "array reads are not expressions; bind them with `let x = A[..] in ...`",
                vec!["number".into(), "identifier".into(), "`tid`".into(), "`(`".into()],
            )),
            Tok::Sym("(") => {
                self.bump();
                let inner = self.num()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            _ => Err(self.unexpected(&["number", "identifier", "`tid`", "`(`"])),
        }
    }
}
