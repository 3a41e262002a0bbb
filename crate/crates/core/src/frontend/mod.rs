//! Concrete syntax: lexing, parsing, alpha-renaming and pretty-printing of
//! kernels (`.bcu`) and protocols (`.map`).

mod lexer;
mod parser;
pub mod pretty;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{BoolExpr, Kernel, KernelKind, NumExpr, Protocol, Span};

pub use pretty::{boolean as pretty_bool, kernel as pretty_kernel, num as pretty_num, protocol as pretty_protocol};

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
pub struct ParseError {
    pub span: Span,
    pub message: String,
    pub expected: Vec<String>,
}

impl ParseError {
    pub fn new(span: Span, message: impl Into<String>, expected: Vec<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
            expected,
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParseOptions {
    /// Reject the `sync` extension.
    pub strict_paper: bool,
}

/// A binder that was renamed to keep binders pairwise distinct.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rename {
    pub original: String,
    pub renamed: String,
    pub span: Span,
}

impl fmt::Display for Rename {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: binder `{}` renamed to `{}`",
            self.span, self.original, self.renamed
        )
    }
}

#[derive(Clone, Debug)]
pub struct ParsedKernel {
    pub kernel: Kernel,
    pub renames: Vec<Rename>,
}

pub fn parse_kernel(source: &str) -> Result<Kernel, ParseError> {
    parse_kernel_with(source, &ParseOptions::default()).map(|p| p.kernel)
}

/// Parses and alpha-renames a kernel so that its binders are pairwise
/// distinct and distinct from its free variables.
pub fn parse_kernel_with(source: &str, options: &ParseOptions) -> Result<ParsedKernel, ParseError> {
    let tokens = lexer::tokenize(source)?;
    let mut parser = parser::Parser::new(tokens, options);
    let raw = parser.kernel()?;
    parser.expect_eof()?;
    let (kernel, renames) = alpha_rename(&raw);
    Ok(ParsedKernel { kernel, renames })
}

pub fn parse_protocol(source: &str) -> Result<Protocol, ParseError> {
    let tokens = lexer::tokenize(source)?;
    let options = ParseOptions::default();
    let mut parser = parser::Parser::new(tokens, &options);
    let protocol = parser.protocol()?;
    parser.expect_eof()?;
    Ok(protocol)
}

pub fn parse_num(source: &str) -> Result<NumExpr, ParseError> {
    let tokens = lexer::tokenize(source)?;
    let options = ParseOptions::default();
    let mut parser = parser::Parser::new(tokens, &options);
    let e = parser.num()?;
    parser.expect_eof()?;
    Ok(e)
}

pub fn parse_bool(source: &str) -> Result<BoolExpr, ParseError> {
    let tokens = lexer::tokenize(source)?;
    let options = ParseOptions::default();
    let mut parser = parser::Parser::new(tokens, &options);
    let c = parser.boolean()?;
    parser.expect_eof()?;
    Ok(c)
}

/// Renames binders that repeat an earlier binder or shadow a free variable.
/// Fresh names are `<name>_<n>` for the smallest unused `n`.
pub fn alpha_rename(kernel: &Kernel) -> (Kernel, Vec<Rename>) {
    let mut all_names = kernel.free_vars();
    all_names.extend(kernel.binders().into_iter().map(str::to_owned));
    let mut renamer = Renamer {
        taken: kernel.free_vars(),
        all_names,
        renames: Vec::new(),
    };
    let out = renamer.kernel(kernel, &BTreeMap::new());
    (out, renamer.renames)
}

struct Renamer {
    taken: BTreeSet<String>,
    all_names: BTreeSet<String>,
    renames: Vec<Rename>,
}

impl Renamer {
    fn bind(&mut self, binder: &str, span: Span) -> String {
        let name = if self.taken.contains(binder) {
            let fresh = (1..)
                .map(|n| format!("{binder}_{n}"))
                .find(|c| !self.all_names.contains(c) && !self.taken.contains(c))
                .expect("unbounded search");
            self.renames.push(Rename {
                original: binder.to_owned(),
                renamed: fresh.clone(),
                span,
            });
            fresh
        } else {
            binder.to_owned()
        };
        self.taken.insert(name.clone());
        name
    }

    fn kernel(&mut self, k: &Kernel, scope: &BTreeMap<String, String>) -> Kernel {
        let kind = match &k.kind {
            KernelKind::Skip => KernelKind::Skip,
            KernelKind::Sync => KernelKind::Sync,
            KernelKind::Write { index, payload } => KernelKind::Write {
                index: rename_num(index, scope),
                payload: rename_num(payload, scope),
            },
            KernelKind::Read { binder, index, body } => {
                let index = rename_num(index, scope);
                let name = self.bind(binder, k.span);
                let mut inner = scope.clone();
                inner.insert(binder.clone(), name.clone());
                KernelKind::Read {
                    binder: name,
                    index,
                    body: Box::new(self.kernel(body, &inner)),
                }
            }
            KernelKind::Seq(first, second) => KernelKind::Seq(
                Box::new(self.kernel(first, scope)),
                Box::new(self.kernel(second, scope)),
            ),
            KernelKind::If {
                cond,
                then_branch,
                else_branch,
            } => KernelKind::If {
                cond: rename_bool(cond, scope),
                then_branch: Box::new(self.kernel(then_branch, scope)),
                else_branch: Box::new(self.kernel(else_branch, scope)),
            },
            KernelKind::For { binder, lo, hi, body } => {
                let lo = rename_num(lo, scope);
                let hi = rename_num(hi, scope);
                let name = self.bind(binder, k.span);
                let mut inner = scope.clone();
                inner.insert(binder.clone(), name.clone());
                KernelKind::For {
                    binder: name,
                    lo,
                    hi,
                    body: Box::new(self.kernel(body, &inner)),
                }
            }
        };
        Kernel { kind, span: k.span }
    }
}

fn rename_num(e: &NumExpr, scope: &BTreeMap<String, String>) -> NumExpr {
    match e {
        NumExpr::Var(name) => NumExpr::Var(scope.get(name).cloned().unwrap_or_else(|| name.clone())),
        NumExpr::Bin(op, lhs, rhs) => NumExpr::bin(*op, rename_num(lhs, scope), rename_num(rhs, scope)),
        other => other.clone(),
    }
}

fn rename_bool(c: &BoolExpr, scope: &BTreeMap<String, String>) -> BoolExpr {
    match c {
        BoolExpr::True | BoolExpr::False => c.clone(),
        BoolExpr::Cmp(rel, lhs, rhs) => BoolExpr::Cmp(*rel, rename_num(lhs, scope), rename_num(rhs, scope)),
        BoolExpr::Conn(conn, lhs, rhs) => BoolExpr::conn(*conn, rename_bool(lhs, scope), rename_bool(rhs, scope)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{Conn, Mode, NumOp, Rel};

    fn x() -> NumExpr {
        NumExpr::var("x")
    }

    fn tid_is_zero() -> BoolExpr {
        BoolExpr::cmp(Rel::Eq, NumExpr::Tid, NumExpr::lit(0))
    }

    #[test]
    fn drf_kernel() {
        let k = parse_kernel("if (tid=0) { A[0] := tid } else { skip }").unwrap();
        let expected = Kernel::if_else(
            tid_is_zero(),
            Kernel::write(NumExpr::lit(0), NumExpr::Tid),
            Kernel::skip(),
        );
        assert_eq!(k, expected);
    }

    #[test]
    fn skip_kernel_and_protocol() {
        assert_eq!(parse_kernel("skip").unwrap(), Kernel::skip());
        assert_eq!(parse_protocol("skip").unwrap(), Protocol::skip());
    }

    #[test]
    fn racy_kernel() {
        let k = parse_kernel("forU x in 0..M { let y = A[x] in A[x] := y + 1 }").unwrap();
        let expected = Kernel::for_loop(
            "x",
            NumExpr::lit(0),
            NumExpr::var("M"),
            Kernel::read(
                "y",
                x(),
                Kernel::write(x(), NumExpr::add(NumExpr::var("y"), NumExpr::lit(1))),
            ),
        );
        assert_eq!(k, expected);
    }

    #[test]
    fn racy_protocol() {
        let p = parse_protocol("forU x in 0..M { rd[x]; wr[x] }").unwrap();
        let expected = Protocol::for_loop(
            "x",
            NumExpr::lit(0),
            NumExpr::var("M"),
            Protocol::seq(Protocol::rd(x()), Protocol::wr(x())),
        );
        assert_eq!(p, expected);
    }

    #[test]
    fn drf_protocol() {
        let p = parse_protocol("if (tid=0) { wr[0] } else { skip }").unwrap();
        assert_eq!(
            p,
            Protocol::if_else(tid_is_zero(), Protocol::access(Mode::Wr, NumExpr::lit(0)), Protocol::skip())
        );
    }

    #[test]
    fn sync_fragment_protocols() {
        let p = parse_protocol("wr[tid]; sync; rd[0]").unwrap();
        assert!(matches!(p.kind, crate::ast::ProtocolKind::SSeq(..)));
        let p = parse_protocol("forS i in 0..2 { wr[i]; sync }").unwrap();
        assert!(matches!(p.kind, crate::ast::ProtocolKind::SFor { .. }));
    }

    #[test]
    fn missing_else_is_an_error() {
        let err = parse_kernel("if (tid=0) { skip }").unwrap_err();
        assert!(err.message.contains("else"), "{err}");
        assert_eq!(err.expected, vec!["`else`".to_owned()]);
    }

    #[test]
    fn strict_mode_rejects_sync() {
        assert!(parse_kernel("sync").is_ok());
        let strict = ParseOptions { strict_paper: true };
        let err = parse_kernel_with("A[0] := 1; sync", &strict).unwrap_err();
        assert_eq!(err.span.start, 11);
    }

    #[test]
    fn let_extends_right() {
        let k = parse_kernel("let y = A[0] in A[1] := y; A[2] := y").unwrap();
        let KernelKind::Read { body, .. } = &k.kind else {
            panic!("expected a read, got {k:?}");
        };
        assert!(matches!(body.kind, KernelKind::Seq(..)));
    }

    #[test]
    fn expression_precedence() {
        let e = parse_num("1 + 2 * x - 3").unwrap();
        let expected = NumExpr::bin(
            NumOp::Monus,
            NumExpr::add(NumExpr::lit(1), NumExpr::bin(NumOp::Mul, NumExpr::lit(2), x())),
            NumExpr::lit(3),
        );
        assert_eq!(e, expected);
        let c = parse_bool("a < 1 || b = 2 && (c + 1) >= 3").unwrap();
        let expected = BoolExpr::conn(
            Conn::Or,
            BoolExpr::cmp(Rel::Lt, NumExpr::var("a"), NumExpr::lit(1)),
            BoolExpr::conn(
                Conn::And,
                BoolExpr::cmp(Rel::Eq, NumExpr::var("b"), NumExpr::lit(2)),
                BoolExpr::cmp(Rel::Ge, NumExpr::add(NumExpr::var("c"), NumExpr::lit(1)), NumExpr::lit(3)),
            ),
        );
        assert_eq!(c, expected);
        assert_eq!(parse_bool("((true))").unwrap(), BoolExpr::True);
    }

    #[test]
    fn duplicate_binders_are_renamed() {
        let parsed = parse_kernel_with(
            "forU x in 0..2 { A[x] := 0 }; forU x in 0..2 { let M = A[x] in A[x] := M }",
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(parsed.kernel.binders(), vec!["x", "x_1", "M"]);
        assert_eq!(parsed.renames.len(), 1);
        assert_eq!(parsed.renames[0].renamed, "x_1");

        // A binder shadowing a free parameter is renamed too.
        let parsed = parse_kernel_with("forU M in 0..M { A[M] := 1 }", &ParseOptions::default()).unwrap();
        assert_eq!(
            parsed.kernel,
            Kernel::for_loop(
                "M_1",
                NumExpr::lit(0),
                NumExpr::var("M"),
                Kernel::write(NumExpr::var("M_1"), NumExpr::lit(1))
            )
        );
    }

    #[test]
    fn nested_shadowing_resolves_to_innermost() {
        let k = parse_kernel("forU x in 0..2 { forU x in 0..x { A[x] := 0 } }").unwrap();
        let expected = Kernel::for_loop(
            "x",
            NumExpr::lit(0),
            NumExpr::lit(2),
            Kernel::for_loop("x_1", NumExpr::lit(0), x(), Kernel::write(NumExpr::var("x_1"), NumExpr::lit(0))),
        );
        assert_eq!(k, expected);
    }

    #[test]
    fn reserved_names_cannot_be_bound() {
        assert!(parse_kernel("let tid = A[0] in skip").is_err());
        assert!(parse_kernel("forU A in 0..1 { skip }").is_err());
    }

    #[test]
    fn error_spans_stay_inside_input() {
        for src in ["", "A[0] :=", "if (tid) { skip } else { skip }", "forU x in 0 { skip }", "skip;", "let y = A[0]"] {
            let err = parse_kernel(src).unwrap_err();
            assert!(err.span.start <= src.len() && err.span.end <= src.len(), "{src}: {err:?}");
            assert!(!err.message.is_empty());
        }
    }

    #[test]
    fn spans_point_at_statements() {
        let k = parse_kernel("skip;\n  A[tid] := 1").unwrap();
        let KernelKind::Seq(_, second) = &k.kind else { panic!() };
        assert_eq!((second.span.line, second.span.column), (2, 3));
        assert_eq!((second.span.start, second.span.end), (8, 19));
    }

    #[test]
    fn round_trip_examples() {
        for src in [
            "forU x in 0..M { let y = A[x] in A[x] := y + 1 }",
            "if (tid=0) { A[0] := tid } else { skip }",
            "A[tid] := tid; let x = A[tid] in A[x] := 9",
            "{ let y = A[0] in skip }; { A[1] := 2; A[2] := (3 - 1) - 1 }; sync",
            "if (tid < 2 && (tid = 0 || M > 1)) { skip } else { A[tid % 2] := tid / 2 }",
        ] {
            let k = parse_kernel(src).unwrap();
            let printed = pretty_kernel(&k);
            assert!(parse_kernel(&printed).unwrap().alpha_eq(&k), "{src} -> {printed}");
        }
    }
}
