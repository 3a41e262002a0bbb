//! Behavioral type system: checks a kernel against a set of allowed
//! variables and produces its memory access protocol.
//!
//! Variables bound by array reads never enter the allowed set, so a typable
//! kernel cannot index the array or steer control flow with data it read
//! from the array. Such kernels are exactly those whose protocol-level race
//! verdicts are exact.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{BoolExpr, Kernel, KernelKind, NumExpr, Protocol, ProtocolKind, Span, TID};

/// The allowed variables of the typing judgments, plus bookkeeping for error
/// messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeContext {
    allowed: BTreeSet<String>,
    /// Read binders in scope. Never allowed in indices or conditions.
    data: BTreeSet<String>,
    allow_sync: bool,
}

impl TypeContext {
    pub fn new<S: Into<String>>(allowed: impl IntoIterator<Item = S>) -> Self {
        TypeContext {
            allowed: allowed.into_iter().map(Into::into).collect(),
            data: BTreeSet::new(),
            allow_sync: true,
        }
    }

    /// `{tid}` together with the given kernel parameters.
    pub fn for_kernel<S: Into<String>>(params: impl IntoIterator<Item = S>) -> Self {
        let mut ctx = TypeContext::new(params);
        ctx.allowed.insert(TID.to_owned());
        ctx
    }

    /// Disables the barrier extension.
    pub fn strict_paper(mut self, strict: bool) -> Self {
        self.allow_sync = !strict;
        self
    }

    /// Marks `name` as holding array data, as a read binder in scope would.
    pub fn with_data_var(mut self, name: impl Into<String>) -> Self {
        self.data.insert(name.into());
        self
    }

    pub fn allowed(&self) -> &BTreeSet<String> {
        &self.allowed
    }

    pub fn allows(&self, name: &str) -> bool {
        self.allowed.contains(name)
    }

    fn binds(&self, name: &str) -> bool {
        self.allowed.contains(name) || self.data.contains(name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeErrorKind {
    DataDependentIndex,
    DataDependentControl,
    UnboundVariable,
    DuplicateBinder,
    SyncInUnsynchronizedMode,
}

impl TypeErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TypeErrorKind::DataDependentIndex => "data_dependent_index",
            TypeErrorKind::DataDependentControl => "data_dependent_control",
            TypeErrorKind::UnboundVariable => "unbound_variable",
            TypeErrorKind::DuplicateBinder => "duplicate_binder",
            TypeErrorKind::SyncInUnsynchronizedMode => "sync_in_unsynchronized_mode",
        }
    }
}

impl fmt::Display for TypeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
#[error("{span}: {kind}: {explanation}")]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub span: Span,
    pub variable: Option<String>,
    pub explanation: String,
}

#[derive(Clone, Copy)]
enum Position {
    Index,
    Control,
}

fn check_vars(ctx: &TypeContext, vars: Vec<&str>, position: Position, span: Span) -> Result<(), TypeError> {
    let Some(var) = vars.into_iter().find(|v| !ctx.allows(v)) else {
        return Ok(());
    };
    let (kind, explanation) = if ctx.data.contains(var) {
        match position {
            Position::Index => (
                TypeErrorKind::DataDependentIndex,
                format!("array index depends on `{var}`, which holds data read from the array"),
            ),
            Position::Control => (
                TypeErrorKind::DataDependentControl,
                format!("control flow depends on `{var}`, which holds data read from the array"),
            ),
        }
    } else {
        (TypeErrorKind::UnboundVariable, format!("variable `{var}` is not bound"))
    };
    Err(TypeError {
        kind,
        span,
        variable: Some(var.to_owned()),
        explanation,
    })
}

/// Accepts `n` iff its free variables are all allowed. Reports the first
/// offending variable in left-to-right order.
pub fn check_num(ctx: &TypeContext, n: &NumExpr) -> Result<(), TypeError> {
    check_vars(ctx, n.vars_in_order(), Position::Index, Span::default())
}

pub fn check_bool(ctx: &TypeContext, c: &BoolExpr) -> Result<(), TypeError> {
    check_vars(ctx, c.vars_in_order(), Position::Control, Span::default())
}

/// Infers the protocol of `kernel` under `ctx`, or reports the leftmost
/// innermost failing premise.
pub fn infer(ctx: &TypeContext, kernel: &Kernel) -> Result<Protocol, TypeError> {
    let kind = match &kernel.kind {
        KernelKind::Skip => ProtocolKind::Skip,
        KernelKind::Write { index, payload } => {
            check_vars(ctx, index.vars_in_order(), Position::Index, kernel.span)?;
            // Payloads are unconstrained by the rule but must still be in scope.
            if let Some(var) = payload.vars_in_order().into_iter().find(|v| !ctx.binds(v)) {
                return Err(TypeError {
                    kind: TypeErrorKind::UnboundVariable,
                    span: kernel.span,
                    variable: Some(var.to_owned()),
                    explanation: format!("variable `{var}` in the written value is not bound"),
                });
            }
            ProtocolKind::Access {
                mode: crate::ast::Mode::Wr,
                index: index.clone(),
            }
        }
        KernelKind::Read { binder, index, body } => {
            check_vars(ctx, index.vars_in_order(), Position::Index, kernel.span)?;
            ensure_fresh(ctx, binder, kernel.span)?;
            let mut inner = ctx.clone();
            inner.data.insert(binder.clone());
            let rest = infer(&inner, body)?;
            let access = Protocol::rd(index.clone()).with_span(kernel.span);
            return Ok(Protocol::seq_auto(access, rest).with_span(kernel.span));
        }
        KernelKind::Seq(first, second) => {
            let first = infer(ctx, first)?;
            let second = infer(ctx, second)?;
            return Ok(Protocol::seq_auto(first, second).with_span(kernel.span));
        }
        KernelKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            check_vars(ctx, cond.vars_in_order(), Position::Control, kernel.span)?;
            let then_p = infer(ctx, then_branch)?;
            let else_p = infer(ctx, else_branch)?;
            if then_p.is_synchronized() || else_p.is_synchronized() {
                return Err(barrier_error(kernel.span, "a barrier inside a conditional is not supported"));
            }
            ProtocolKind::If {
                cond: cond.clone(),
                then_branch: Box::new(then_p),
                else_branch: Box::new(else_p),
            }
        }
        KernelKind::For { binder, lo, hi, body } => {
            check_vars(ctx, lo.vars_in_order(), Position::Control, kernel.span)?;
            check_vars(ctx, hi.vars_in_order(), Position::Control, kernel.span)?;
            ensure_fresh(ctx, binder, kernel.span)?;
            let mut inner = ctx.clone();
            inner.allowed.insert(binder.clone());
            let body_p = infer(&inner, body)?;
            if body_p.is_synchronized() {
                return Err(barrier_error(
                    kernel.span,
                    "a barrier inside a loop needs a synchronized loop, which is not inferred",
                ));
            }
            ProtocolKind::For {
                binder: binder.clone(),
                lo: lo.clone(),
                hi: hi.clone(),
                body: Box::new(body_p),
            }
        }
        KernelKind::Sync => {
            if !ctx.allow_sync {
                return Err(barrier_error(
                    kernel.span,
                    "`sync` is outside the unsynchronized fragment (strict-paper mode)",
                ));
            }
            ProtocolKind::Sync
        }
    };
    Ok(Protocol::new(kind).with_span(kernel.span))
}

fn ensure_fresh(ctx: &TypeContext, binder: &str, span: Span) -> Result<(), TypeError> {
    if ctx.binds(binder) {
        return Err(TypeError {
            kind: TypeErrorKind::DuplicateBinder,
            span,
            variable: Some(binder.to_owned()),
            explanation: format!("binder `{binder}` is already in scope"),
        });
    }
    Ok(())
}

fn barrier_error(span: Span, explanation: &str) -> TypeError {
    TypeError {
        kind: TypeErrorKind::SyncInUnsynchronizedMode,
        span,
        variable: None,
        explanation: explanation.to_owned(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Typability {
    Typable,
    IllTyped,
}

impl Typability {
    pub fn as_str(self) -> &'static str {
        match self {
            Typability::Typable => "typable",
            Typability::IllTyped => "ill_typed",
        }
    }
}

/// Outcome of inference. Race verdicts on typable kernels are exact; on
/// ill-typed kernels alarms may be false.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Classification {
    Typable(Protocol),
    IllTyped(TypeError),
}

impl Classification {
    pub fn typability(&self) -> Typability {
        match self {
            Classification::Typable(_) => Typability::Typable,
            Classification::IllTyped(_) => Typability::IllTyped,
        }
    }
}

pub fn classify(result: Result<Protocol, TypeError>) -> Classification {
    match result {
        Ok(p) => Classification::Typable(p),
        Err(e) => Classification::IllTyped(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_kernel, parse_protocol};
    use crate::ast::Rel;

    #[test]
    fn check_num_examples() {
        assert!(check_num(&TypeContext::new(["M", "tid"]), &NumExpr::var("M")).is_ok());
        let err = check_num(&TypeContext::new(["tid"]), &NumExpr::var("x")).unwrap_err();
        assert_eq!(err.variable.as_deref(), Some("x"));
        let err = check_num(&TypeContext::new(["tid"]).with_data_var("x"), &NumExpr::var("x")).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::DataDependentIndex);
        assert!(check_num(&TypeContext::new(Vec::<String>::new()), &NumExpr::lit(7)).is_ok());
    }

    #[test]
    fn check_bool_examples() {
        let tid0 = BoolExpr::cmp(Rel::Eq, NumExpr::Tid, NumExpr::lit(0));
        assert!(check_bool(&TypeContext::new(["tid"]), &tid0).is_ok());
        assert!(check_bool(&TypeContext::new(Vec::<String>::new()), &BoolExpr::True).is_ok());
        let y_lt_2 = BoolExpr::cmp(Rel::Lt, NumExpr::var("y"), NumExpr::lit(2));
        let err = check_bool(&TypeContext::new(["tid"]).with_data_var("y"), &y_lt_2).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::DataDependentControl);
        assert_eq!(err.variable.as_deref(), Some("y"));
    }

    #[test]
    fn first_violation_is_leftmost() {
        let e = NumExpr::add(NumExpr::var("a"), NumExpr::var("b"));
        let err = check_num(&TypeContext::new(["tid"]), &e).unwrap_err();
        assert_eq!(err.variable.as_deref(), Some("a"));
    }

    #[test]
    fn racy_example_judgment() {
        let k = parse_kernel("forU x in 0..M { let y = A[x] in A[x] := y + 1 }").unwrap();
        let u = infer(&TypeContext::new(["M", "tid"]), &k).unwrap();
        assert_eq!(u, parse_protocol("forU x in 0..M { rd[x]; wr[x] }").unwrap());
    }

    #[test]
    fn drf_example_judgment() {
        let k = parse_kernel("if (tid=0) { A[0] := tid } else { skip }").unwrap();
        let u = infer(&TypeContext::new(["tid"]), &k).unwrap();
        assert_eq!(u, parse_protocol("if (tid=0) { wr[0] } else { skip }").unwrap());
    }

    #[test]
    fn data_dependent_write_is_rejected() {
        let src = "A[tid] := tid; let x = A[tid] in A[x] := 9";
        let k = parse_kernel(src).unwrap();
        let err = infer(&TypeContext::new(["tid"]), &k).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::DataDependentIndex);
        assert_eq!(err.variable.as_deref(), Some("x"));
        assert_eq!(&src[err.span.start..err.span.end], "A[x] := 9");
        assert_eq!(classify(Err(err)).typability(), Typability::IllTyped);
    }

    #[test]
    fn data_dependent_branch_and_loop() {
        let k = parse_kernel("let y = A[0] in if (y < 2) { skip } else { skip }").unwrap();
        let err = infer(&TypeContext::for_kernel(Vec::<String>::new()), &k).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::DataDependentControl);
        let k = parse_kernel("let y = A[0] in forU i in 0..y { A[i] := 1 }").unwrap();
        let err = infer(&TypeContext::for_kernel(Vec::<String>::new()), &k).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::DataDependentControl);
    }

    #[test]
    fn payload_may_use_read_data_but_not_unbound_names() {
        let k = parse_kernel("let y = A[tid] in A[tid] := y * 2").unwrap();
        assert!(infer(&TypeContext::for_kernel(Vec::<String>::new()), &k).is_ok());
        let k = parse_kernel("A[tid] := N").unwrap();
        let err = infer(&TypeContext::for_kernel(Vec::<String>::new()), &k).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::UnboundVariable);
        assert_eq!(err.variable.as_deref(), Some("N"));
    }

    #[test]
    fn unbound_parameter() {
        let k = parse_kernel("forU x in 0..M { A[x] := 0 }").unwrap();
        let err = infer(&TypeContext::for_kernel(Vec::<String>::new()), &k).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::UnboundVariable);
        assert_eq!(err.variable.as_deref(), Some("M"));
    }

    #[test]
    fn binder_clashing_with_context() {
        let k = Kernel::for_loop("M", NumExpr::lit(0), NumExpr::lit(1), Kernel::skip());
        let err = infer(&TypeContext::for_kernel(["M"]), &k).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::DuplicateBinder);
    }

    #[test]
    fn skip_is_typable() {
        let r = infer(&TypeContext::new(Vec::<String>::new()), &Kernel::skip());
        assert_eq!(classify(r), Classification::Typable(Protocol::skip()));
    }

    #[test]
    fn barrier_extension() {
        let k = parse_kernel("A[tid] := 1; sync; let y = A[0] in A[tid] := y").unwrap();
        let ctx = TypeContext::for_kernel(Vec::<String>::new());
        let u = infer(&ctx, &k).unwrap();
        assert_eq!(u, parse_protocol("wr[tid]; sync; rd[0]; wr[tid]").unwrap());
        assert!(matches!(u.kind, ProtocolKind::SSeq(..)));
        let err = infer(&ctx.clone().strict_paper(true), &k).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::SyncInUnsynchronizedMode);

        let k = parse_kernel("if (tid=0) { sync } else { skip }").unwrap();
        assert_eq!(infer(&ctx, &k).unwrap_err().kind, TypeErrorKind::SyncInUnsynchronizedMode);
        let k = parse_kernel("forU i in 0..2 { sync }").unwrap();
        assert_eq!(infer(&ctx, &k).unwrap_err().kind, TypeErrorKind::SyncInUnsynchronizedMode);
    }
}
