//! Syntax trees for kernels and memory access protocols, plus the runtime
//! values (phases, histories, access values) that the analyses exchange.
//!
//! All values are immutable trees with structural equality. Source spans ride
//! along on kernel and protocol nodes for diagnostics but never take part in
//! equality.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Natural numbers: thread ids, indices, array contents.
pub type Nat = u64;

/// The distinguished thread-id variable.
pub const TID: &str = "tid";

/// Name of the single shared array.
pub const ARRAY_NAME: &str = "A";

/// Pseudo-thread that owns initializer phases. It never belongs to a thread
/// set and its accesses are invisible to race checking.
pub const INIT_THREAD: Nat = Nat::MAX;

/// Byte offsets plus the 1-based line/column of `start`.
///
/// Spans compare equal unconditionally so that syntax trees compare by
/// structure alone; compare the fields when the location itself matters.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub column: usize,
}

impl Span {
    pub fn new(start: usize, end: usize, line: usize, column: usize) -> Self {
        Span {
            start,
            end,
            line,
            column,
        }
    }

    /// Smallest span covering `self` and `other`, positioned at `self`.
    pub fn to(self, other: Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
            line: self.line,
            column: self.column,
        }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NumOp {
    Add,
    /// Truncated subtraction: `a - b` is 0 when `b > a`.
    Monus,
    Mul,
    Div,
    Mod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum ArithError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("arithmetic overflow")]
    Overflow,
}

impl NumOp {
    pub fn symbol(self) -> &'static str {
        match self {
            NumOp::Add => "+",
            NumOp::Monus => "-",
            NumOp::Mul => "*",
            NumOp::Div => "/",
            NumOp::Mod => "%",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            NumOp::Add | NumOp::Monus => 1,
            NumOp::Mul | NumOp::Div | NumOp::Mod => 2,
        }
    }

    pub fn apply(self, lhs: Nat, rhs: Nat) -> Result<Nat, ArithError> {
        match self {
            NumOp::Add => lhs.checked_add(rhs).ok_or(ArithError::Overflow),
            NumOp::Monus => Ok(lhs.saturating_sub(rhs)),
            NumOp::Mul => lhs.checked_mul(rhs).ok_or(ArithError::Overflow),
            NumOp::Div => lhs.checked_div(rhs).ok_or(ArithError::DivisionByZero),
            NumOp::Mod => lhs.checked_rem(rhs).ok_or(ArithError::DivisionByZero),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Eq => "=",
            Rel::Ne => "!=",
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
        }
    }

    pub fn holds(self, lhs: Nat, rhs: Nat) -> bool {
        match self {
            Rel::Eq => lhs == rhs,
            Rel::Ne => lhs != rhs,
            Rel::Lt => lhs < rhs,
            Rel::Le => lhs <= rhs,
            Rel::Gt => lhs > rhs,
            Rel::Ge => lhs >= rhs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Conn {
    And,
    Or,
}

impl Conn {
    pub fn symbol(self) -> &'static str {
        match self {
            Conn::And => "&&",
            Conn::Or => "||",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            Conn::Or => 1,
            Conn::And => 2,
        }
    }

    pub fn apply(self, lhs: bool, rhs: bool) -> bool {
        match self {
            Conn::And => lhs && rhs,
            Conn::Or => lhs || rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum NumExpr {
    Var(String),
    Tid,
    Lit(Nat),
    Bin(NumOp, Box<NumExpr>, Box<NumExpr>),
}

impl NumExpr {
    pub fn var(name: impl Into<String>) -> Self {
        NumExpr::Var(name.into())
    }

    pub fn lit(value: Nat) -> Self {
        NumExpr::Lit(value)
    }

    pub fn bin(op: NumOp, lhs: NumExpr, rhs: NumExpr) -> Self {
        NumExpr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(lhs: NumExpr, rhs: NumExpr) -> Self {
        NumExpr::bin(NumOp::Add, lhs, rhs)
    }

    /// Variable occurrences in left-to-right order, duplicates kept. `tid`
    /// shows up under its reserved name.
    pub fn vars_in_order(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.push_vars(&mut out);
        out
    }

    fn push_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            NumExpr::Var(name) => out.push(name),
            NumExpr::Tid => out.push(TID),
            NumExpr::Lit(_) => {}
            NumExpr::Bin(_, lhs, rhs) => {
                lhs.push_vars(out);
                rhs.push_vars(out);
            }
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        self.vars_in_order().into_iter().map(str::to_owned).collect()
    }

    pub fn mentions(&self, var: &str) -> bool {
        self.vars_in_order().contains(&var)
    }

    /// Replaces every occurrence of `var` (or `tid` when `var` is `"tid"`)
    /// by the literal `value`.
    pub fn substitute(&self, var: &str, value: Nat) -> NumExpr {
        match self {
            NumExpr::Var(name) if name == var => NumExpr::Lit(value),
            NumExpr::Tid if var == TID => NumExpr::Lit(value),
            NumExpr::Bin(op, lhs, rhs) => NumExpr::bin(
                *op,
                lhs.substitute(var, value),
                rhs.substitute(var, value),
            ),
            other => other.clone(),
        }
    }

    fn rename(&self, scope: &BTreeMap<String, String>) -> NumExpr {
        match self {
            NumExpr::Var(name) => match scope.get(name) {
                Some(new) => NumExpr::Var(new.clone()),
                None => self.clone(),
            },
            NumExpr::Bin(op, lhs, rhs) => NumExpr::bin(*op, lhs.rename(scope), rhs.rename(scope)),
            other => other.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    True,
    False,
    Cmp(Rel, NumExpr, NumExpr),
    Conn(Conn, Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    pub fn cmp(rel: Rel, lhs: NumExpr, rhs: NumExpr) -> Self {
        BoolExpr::Cmp(rel, lhs, rhs)
    }

    pub fn conn(conn: Conn, lhs: BoolExpr, rhs: BoolExpr) -> Self {
        BoolExpr::Conn(conn, Box::new(lhs), Box::new(rhs))
    }

    pub fn vars_in_order(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.push_vars(&mut out);
        out
    }

    fn push_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            BoolExpr::True | BoolExpr::False => {}
            BoolExpr::Cmp(_, lhs, rhs) => {
                lhs.push_vars(out);
                rhs.push_vars(out);
            }
            BoolExpr::Conn(_, lhs, rhs) => {
                lhs.push_vars(out);
                rhs.push_vars(out);
            }
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        self.vars_in_order().into_iter().map(str::to_owned).collect()
    }

    pub fn mentions(&self, var: &str) -> bool {
        self.vars_in_order().contains(&var)
    }

    pub fn substitute(&self, var: &str, value: Nat) -> BoolExpr {
        match self {
            BoolExpr::True | BoolExpr::False => self.clone(),
            BoolExpr::Cmp(rel, lhs, rhs) => {
                BoolExpr::Cmp(*rel, lhs.substitute(var, value), rhs.substitute(var, value))
            }
            BoolExpr::Conn(conn, lhs, rhs) => {
                BoolExpr::conn(*conn, lhs.substitute(var, value), rhs.substitute(var, value))
            }
        }
    }

    fn rename(&self, scope: &BTreeMap<String, String>) -> BoolExpr {
        match self {
            BoolExpr::True | BoolExpr::False => self.clone(),
            BoolExpr::Cmp(rel, lhs, rhs) => BoolExpr::Cmp(*rel, lhs.rename(scope), rhs.rename(scope)),
            BoolExpr::Conn(conn, lhs, rhs) => {
                BoolExpr::conn(*conn, lhs.rename(scope), rhs.rename(scope))
            }
        }
    }
}

/// Free variables of a numeric or boolean expression.
pub trait FreeVars {
    fn free_vars(&self) -> BTreeSet<String>;
}

impl FreeVars for NumExpr {
    fn free_vars(&self) -> BTreeSet<String> {
        NumExpr::free_vars(self)
    }
}

impl FreeVars for BoolExpr {
    fn free_vars(&self) -> BTreeSet<String> {
        BoolExpr::free_vars(self)
    }
}

pub fn free_vars<E: FreeVars>(expr: &E) -> BTreeSet<String> {
    expr.free_vars()
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SubstError {
    #[error("cannot substitute `{0}`: it is bound inside the term")]
    BoundVariable(String),
}

/// A kernel term together with its source location.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Kernel {
    pub kind: KernelKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Skip,
    /// `A[index] := payload`
    Write { index: NumExpr, payload: NumExpr },
    /// `let binder = A[index] in body`
    Read {
        binder: String,
        index: NumExpr,
        body: Box<Kernel>,
    },
    Seq(Box<Kernel>, Box<Kernel>),
    If {
        cond: BoolExpr,
        then_branch: Box<Kernel>,
        else_branch: Box<Kernel>,
    },
    /// Iterates `binder` over the half-open range `[lo, hi)`.
    For {
        binder: String,
        lo: NumExpr,
        hi: NumExpr,
        body: Box<Kernel>,
    },
    /// Barrier; only accepted outside strict-paper mode.
    Sync,
}

impl Kernel {
    pub fn new(kind: KernelKind) -> Self {
        Kernel {
            kind,
            span: Span::default(),
        }
    }

    pub fn with_span(mut self, span: Span) -> Self {
        self.span = span;
        self
    }

    pub fn skip() -> Self {
        Kernel::new(KernelKind::Skip)
    }

    pub fn sync() -> Self {
        Kernel::new(KernelKind::Sync)
    }

    pub fn write(index: NumExpr, payload: NumExpr) -> Self {
        Kernel::new(KernelKind::Write { index, payload })
    }

    pub fn read(binder: impl Into<String>, index: NumExpr, body: Kernel) -> Self {
        Kernel::new(KernelKind::Read {
            binder: binder.into(),
            index,
            body: Box::new(body),
        })
    }

    pub fn seq(first: Kernel, second: Kernel) -> Self {
        Kernel::new(KernelKind::Seq(Box::new(first), Box::new(second)))
    }

    pub fn if_else(cond: BoolExpr, then_branch: Kernel, else_branch: Kernel) -> Self {
        Kernel::new(KernelKind::If {
            cond,
            then_branch: Box::new(then_branch),
            else_branch: Box::new(else_branch),
        })
    }

    pub fn for_loop(binder: impl Into<String>, lo: NumExpr, hi: NumExpr, body: Kernel) -> Self {
        Kernel::new(KernelKind::For {
            binder: binder.into(),
            lo,
            hi,
            body: Box::new(body),
        })
    }

    /// Binder names in pre-order.
    pub fn binders(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |k| match &k.kind {
            KernelKind::Read { binder, .. } | KernelKind::For { binder, .. } => out.push(binder.as_str()),
            _ => {}
        });
        out
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Kernel)) {
        visit(self);
        match &self.kind {
            KernelKind::Skip | KernelKind::Write { .. } | KernelKind::Sync => {}
            KernelKind::Read { body, .. } | KernelKind::For { body, .. } => body.walk(visit),
            KernelKind::Seq(first, second) => {
                first.walk(visit);
                second.walk(visit);
            }
            KernelKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.walk(visit);
                else_branch.walk(visit);
            }
        }
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn contains_sync(&self) -> bool {
        let mut found = false;
        self.walk(&mut |k| found |= matches!(k.kind, KernelKind::Sync));
        found
    }

    /// Variables occurring outside the scope of any binder, `tid` included.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        let mut note = |vars: Vec<&str>, bound: &Vec<String>| {
            for v in vars {
                if !bound.iter().any(|b| b == v) {
                    out.insert(v.to_owned());
                }
            }
        };
        match &self.kind {
            KernelKind::Skip | KernelKind::Sync => {}
            KernelKind::Write { index, payload } => {
                note(index.vars_in_order(), bound);
                note(payload.vars_in_order(), bound);
            }
            KernelKind::Read { binder, index, body } => {
                note(index.vars_in_order(), bound);
                bound.push(binder.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            KernelKind::Seq(first, second) => {
                first.collect_free(bound, out);
                second.collect_free(bound, out);
            }
            KernelKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                note(cond.vars_in_order(), bound);
                then_branch.collect_free(bound, out);
                else_branch.collect_free(bound, out);
            }
            KernelKind::For { binder, lo, hi, body } => {
                note(lo.vars_in_order(), bound);
                note(hi.vars_in_order(), bound);
                bound.push(binder.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// Literal substitution `b[value/var]`. Fails when `var` is itself a
    /// binder somewhere in the term, which the distinct-binder invariant rules
    /// out for well-formed kernels.
    pub fn substitute(&self, var: &str, value: Nat) -> Result<Kernel, SubstError> {
        if self.binders().contains(&var) {
            return Err(SubstError::BoundVariable(var.to_owned()));
        }
        Ok(self.subst_unchecked(var, value))
    }

    fn subst_unchecked(&self, var: &str, value: Nat) -> Kernel {
        let kind = match &self.kind {
            KernelKind::Skip => KernelKind::Skip,
            KernelKind::Sync => KernelKind::Sync,
            KernelKind::Write { index, payload } => KernelKind::Write {
                index: index.substitute(var, value),
                payload: payload.substitute(var, value),
            },
            KernelKind::Read { binder, index, body } => KernelKind::Read {
                binder: binder.clone(),
                index: index.substitute(var, value),
                body: Box::new(body.subst_unchecked(var, value)),
            },
            KernelKind::Seq(first, second) => KernelKind::Seq(
                Box::new(first.subst_unchecked(var, value)),
                Box::new(second.subst_unchecked(var, value)),
            ),
            KernelKind::If {
                cond,
                then_branch,
                else_branch,
            } => KernelKind::If {
                cond: cond.substitute(var, value),
                then_branch: Box::new(then_branch.subst_unchecked(var, value)),
                else_branch: Box::new(else_branch.subst_unchecked(var, value)),
            },
            KernelKind::For { binder, lo, hi, body } => KernelKind::For {
                binder: binder.clone(),
                lo: lo.substitute(var, value),
                hi: hi.substitute(var, value),
                body: Box::new(body.subst_unchecked(var, value)),
            },
        };
        Kernel {
            kind,
            span: self.span,
        }
    }

    /// Renames every binder to a positional name so that alpha-equivalent
    /// kernels become structurally equal.
    pub fn canonical(&self) -> Kernel {
        let mut counter = 0;
        self.canon(&BTreeMap::new(), &mut counter)
    }

    fn canon(&self, scope: &BTreeMap<String, String>, counter: &mut usize) -> Kernel {
        let fresh = |counter: &mut usize| {
            *counter += 1;
            format!("#{counter}")
        };
        let kind = match &self.kind {
            KernelKind::Skip => KernelKind::Skip,
            KernelKind::Sync => KernelKind::Sync,
            KernelKind::Write { index, payload } => KernelKind::Write {
                index: index.rename(scope),
                payload: payload.rename(scope),
            },
            KernelKind::Read { binder, index, body } => {
                let name = fresh(counter);
                let mut inner = scope.clone();
                inner.insert(binder.clone(), name.clone());
                KernelKind::Read {
                    binder: name,
                    index: index.rename(scope),
                    body: Box::new(body.canon(&inner, counter)),
                }
            }
            KernelKind::Seq(first, second) => KernelKind::Seq(
                Box::new(first.canon(scope, counter)),
                Box::new(second.canon(scope, counter)),
            ),
            KernelKind::If {
                cond,
                then_branch,
                else_branch,
            } => KernelKind::If {
                cond: cond.rename(scope),
                then_branch: Box::new(then_branch.canon(scope, counter)),
                else_branch: Box::new(else_branch.canon(scope, counter)),
            },
            KernelKind::For { binder, lo, hi, body } => {
                let name = fresh(counter);
                let mut inner = scope.clone();
                inner.insert(binder.clone(), name.clone());
                KernelKind::For {
                    binder: name,
                    lo: lo.rename(scope),
                    hi: hi.rename(scope),
                    body: Box::new(body.canon(&inner, counter)),
                }
            }
        };
        Kernel {
            kind,
            span: self.span,
        }
    }

    pub fn alpha_eq(&self, other: &Kernel) -> bool {
        self.canonical() == other.canonical()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rd,
    Wr,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rd => "rd",
            Mode::Wr => "wr",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A memory access protocol together with its source location.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Protocol {
    pub kind: ProtocolKind,
    pub span: Span,
}

/// `Skip`, `Access`, `Seq`, `If` and `For` form the unsynchronized fragment.
/// `Sync`, `SSeq` and `SFor` form the synchronized one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProtocolKind {
    Skip,
    Access { mode: Mode, index: NumExpr },
    Seq(Box<Protocol>, Box<Protocol>),
    If {
        cond: BoolExpr,
        then_branch: Box<Protocol>,
        else_branch: Box<Protocol>,
    },
    For {
        binder: String,
        lo: NumExpr,
        hi: NumExpr,
        body: Box<Protocol>,
    },
    Sync,
    SSeq(Box<Protocol>, Box<Protocol>),
    SFor {
        binder: String,
        lo: NumExpr,
        hi: NumExpr,
        body: Box<Protocol>,
    },
}

impl Protocol {
    pub fn new(kind: ProtocolKind) -> Self {
        Protocol {
            kind,
            span: Span::default(),
        }
    }

    pub fn with_span(mut self, span: Span) -> Self {
        self.span = span;
        self
    }

    pub fn skip() -> Self {
        Protocol::new(ProtocolKind::Skip)
    }

    pub fn sync() -> Self {
        Protocol::new(ProtocolKind::Sync)
    }

    pub fn access(mode: Mode, index: NumExpr) -> Self {
        Protocol::new(ProtocolKind::Access { mode, index })
    }

    pub fn rd(index: NumExpr) -> Self {
        Protocol::access(Mode::Rd, index)
    }

    pub fn wr(index: NumExpr) -> Self {
        Protocol::access(Mode::Wr, index)
    }

    pub fn seq(first: Protocol, second: Protocol) -> Self {
        Protocol::new(ProtocolKind::Seq(Box::new(first), Box::new(second)))
    }

    pub fn sseq(first: Protocol, second: Protocol) -> Self {
        Protocol::new(ProtocolKind::SSeq(Box::new(first), Box::new(second)))
    }

    /// Sequencing that picks the synchronized constructor whenever either
    /// side is synchronized.
    pub fn seq_auto(first: Protocol, second: Protocol) -> Self {
        if first.is_synchronized() || second.is_synchronized() {
            Protocol::sseq(first, second)
        } else {
            Protocol::seq(first, second)
        }
    }

    pub fn if_else(cond: BoolExpr, then_branch: Protocol, else_branch: Protocol) -> Self {
        Protocol::new(ProtocolKind::If {
            cond,
            then_branch: Box::new(then_branch),
            else_branch: Box::new(else_branch),
        })
    }

    pub fn for_loop(binder: impl Into<String>, lo: NumExpr, hi: NumExpr, body: Protocol) -> Self {
        Protocol::new(ProtocolKind::For {
            binder: binder.into(),
            lo,
            hi,
            body: Box::new(body),
        })
    }

    pub fn sfor_loop(binder: impl Into<String>, lo: NumExpr, hi: NumExpr, body: Protocol) -> Self {
        Protocol::new(ProtocolKind::SFor {
            binder: binder.into(),
            lo,
            hi,
            body: Box::new(body),
        })
    }

    pub fn children(&self) -> Vec<&Protocol> {
        match &self.kind {
            ProtocolKind::Skip | ProtocolKind::Access { .. } | ProtocolKind::Sync => vec![],
            ProtocolKind::Seq(a, b) | ProtocolKind::SSeq(a, b) => vec![a, b],
            ProtocolKind::If {
                then_branch,
                else_branch,
                ..
            } => vec![then_branch, else_branch],
            ProtocolKind::For { body, .. } | ProtocolKind::SFor { body, .. } => vec![body],
        }
    }

    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Protocol)) {
        visit(self);
        for child in self.children() {
            child.walk(visit);
        }
    }

    pub fn is_synchronized(&self) -> bool {
        let mut found = false;
        self.walk(&mut |p| {
            found |= matches!(
                p.kind,
                ProtocolKind::Sync | ProtocolKind::SSeq(..) | ProtocolKind::SFor { .. }
            )
        });
        found
    }

    pub fn access_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |p| n += matches!(p.kind, ProtocolKind::Access { .. }) as usize);
        n
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn binders(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |p| match &p.kind {
            ProtocolKind::For { binder, .. } | ProtocolKind::SFor { binder, .. } => out.push(binder.as_str()),
            _ => {}
        });
        out
    }

    pub fn substitute(&self, var: &str, value: Nat) -> Result<Protocol, SubstError> {
        if self.binders().contains(&var) {
            return Err(SubstError::BoundVariable(var.to_owned()));
        }
        Ok(self.subst_unchecked(var, value))
    }

    fn subst_unchecked(&self, var: &str, value: Nat) -> Protocol {
        let sub = |p: &Protocol| Box::new(p.subst_unchecked(var, value));
        let kind = match &self.kind {
            ProtocolKind::Skip => ProtocolKind::Skip,
            ProtocolKind::Sync => ProtocolKind::Sync,
            ProtocolKind::Access { mode, index } => ProtocolKind::Access {
                mode: *mode,
                index: index.substitute(var, value),
            },
            ProtocolKind::Seq(a, b) => ProtocolKind::Seq(sub(a), sub(b)),
            ProtocolKind::SSeq(a, b) => ProtocolKind::SSeq(sub(a), sub(b)),
            ProtocolKind::If {
                cond,
                then_branch,
                else_branch,
            } => ProtocolKind::If {
                cond: cond.substitute(var, value),
                then_branch: sub(then_branch),
                else_branch: sub(else_branch),
            },
            ProtocolKind::For { binder, lo, hi, body } => ProtocolKind::For {
                binder: binder.clone(),
                lo: lo.substitute(var, value),
                hi: hi.substitute(var, value),
                body: sub(body),
            },
            ProtocolKind::SFor { binder, lo, hi, body } => ProtocolKind::SFor {
                binder: binder.clone(),
                lo: lo.substitute(var, value),
                hi: hi.substitute(var, value),
                body: sub(body),
            },
        };
        Protocol {
            kind,
            span: self.span,
        }
    }

    pub fn canonical(&self) -> Protocol {
        let mut counter = 0;
        self.canon(&BTreeMap::new(), &mut counter)
    }

    fn canon(&self, scope: &BTreeMap<String, String>, counter: &mut usize) -> Protocol {
        let rebind = |binder: &str, counter: &mut usize| {
            *counter += 1;
            let name = format!("#{counter}");
            let mut inner = scope.clone();
            inner.insert(binder.to_owned(), name.clone());
            (name, inner)
        };
        let kind = match &self.kind {
            ProtocolKind::Skip => ProtocolKind::Skip,
            ProtocolKind::Sync => ProtocolKind::Sync,
            ProtocolKind::Access { mode, index } => ProtocolKind::Access {
                mode: *mode,
                index: index.rename(scope),
            },
            ProtocolKind::Seq(a, b) => {
                ProtocolKind::Seq(Box::new(a.canon(scope, counter)), Box::new(b.canon(scope, counter)))
            }
            ProtocolKind::SSeq(a, b) => {
                ProtocolKind::SSeq(Box::new(a.canon(scope, counter)), Box::new(b.canon(scope, counter)))
            }
            ProtocolKind::If {
                cond,
                then_branch,
                else_branch,
            } => ProtocolKind::If {
                cond: cond.rename(scope),
                then_branch: Box::new(then_branch.canon(scope, counter)),
                else_branch: Box::new(else_branch.canon(scope, counter)),
            },
            ProtocolKind::For { binder, lo, hi, body } => {
                let (name, inner) = rebind(binder, counter);
                ProtocolKind::For {
                    binder: name,
                    lo: lo.rename(scope),
                    hi: hi.rename(scope),
                    body: Box::new(body.canon(&inner, counter)),
                }
            }
            ProtocolKind::SFor { binder, lo, hi, body } => {
                let (name, inner) = rebind(binder, counter);
                ProtocolKind::SFor {
                    binder: name,
                    lo: lo.rename(scope),
                    hi: hi.rename(scope),
                    body: Box::new(body.canon(&inner, counter)),
                }
            }
        };
        Protocol {
            kind,
            span: self.span,
        }
    }

    pub fn alpha_eq(&self, other: &Protocol) -> bool {
        self.canonical() == other.canonical()
    }
}

/// One access `tid:mode[index]`. Ordering is by thread, then index, with
/// reads before writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct AccessValue {
    pub tid: Nat,
    pub index: Nat,
    pub mode: Mode,
}

impl AccessValue {
    pub fn new(tid: Nat, mode: Mode, index: Nat) -> Self {
        AccessValue { tid, index, mode }
    }

    pub fn rd(tid: Nat, index: Nat) -> Self {
        AccessValue::new(tid, Mode::Rd, index)
    }

    pub fn wr(tid: Nat, index: Nat) -> Self {
        AccessValue::new(tid, Mode::Wr, index)
    }
}

impl fmt::Display for AccessValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}[{}]", self.tid, self.mode, self.index)
    }
}

/// Per-thread reads and last writes within one phase.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AccessRecord {
    pub reads: BTreeSet<Nat>,
    pub writes: BTreeMap<Nat, Nat>,
}

impl AccessRecord {
    pub fn is_empty(&self) -> bool {
        self.reads.is_empty() && self.writes.is_empty()
    }
}

/// Thread id to access record, for one barrier-delimited phase.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Phase(pub BTreeMap<Nat, AccessRecord>);

impl Phase {
    pub fn new() -> Self {
        Phase::default()
    }

    /// Initial array contents, owned by [`INIT_THREAD`].
    pub fn initializer(contents: impl IntoIterator<Item = (Nat, Nat)>) -> Self {
        let record = AccessRecord {
            reads: BTreeSet::new(),
            writes: contents.into_iter().collect(),
        };
        let mut phase = Phase::new();
        phase.0.insert(INIT_THREAD, record);
        phase
    }

    pub fn record(&self, tid: Nat) -> Option<&AccessRecord> {
        self.0.get(&tid)
    }

    pub fn insert(&mut self, tid: Nat, record: AccessRecord) {
        self.0.insert(tid, record);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Nat, &AccessRecord)> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Phases, most recent first (`P :: H`).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct History(pub Vec<Phase>);

impl History {
    pub fn empty() -> Self {
        History(Vec::new())
    }

    pub fn single(phase: Phase) -> Self {
        History(vec![phase])
    }

    /// `head :: self`
    pub fn cons(&self, head: Phase) -> History {
        let mut phases = Vec::with_capacity(self.0.len() + 1);
        phases.push(head);
        phases.extend(self.0.iter().cloned());
        History(phases)
    }

    pub fn head(&self) -> Option<&Phase> {
        self.0.first()
    }

    pub fn tail(&self) -> History {
        History(self.0.iter().skip(1).cloned().collect())
    }

    pub fn phases(&self) -> &[Phase] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Bindings for free kernel parameters and, during evaluation, loop and read
/// variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Env(BTreeMap<String, Nat>);

impl Env {
    pub fn new() -> Self {
        Env::default()
    }

    pub fn get(&self, name: &str) -> Option<Nat> {
        self.0.get(name).copied()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Nat) -> Option<Nat> {
        self.0.insert(name.into(), value)
    }

    pub fn remove(&mut self, name: &str) -> Option<Nat> {
        self.0.remove(name)
    }

    pub fn with(mut self, name: impl Into<String>, value: Nat) -> Self {
        self.insert(name, value);
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Nat)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl<S: Into<String>> FromIterator<(S, Nat)> for Env {
    fn from_iter<T: IntoIterator<Item = (S, Nat)>>(iter: T) -> Self {
        Env(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UninitPolicy {
    /// Reading an unwritten index is an error; so is an ambiguous lastwrite.
    Strict,
    /// Unwritten indices read as the given value; ambiguous lastwrites
    /// resolve to the lowest writer tid. Both are reported as warnings.
    Default(Nat),
}

impl UninitPolicy {
    pub fn is_strict(self) -> bool {
        matches!(self, UninitPolicy::Strict)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("thread set must not be empty")]
    EmptyThreadSet,
    #[error("loop fuel must be positive")]
    ZeroFuel,
    #[error("thread id {0} is reserved")]
    ReservedThread(Nat),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    thread_set: BTreeSet<Nat>,
    pub env: Env,
    pub uninit_policy: UninitPolicy,
    loop_fuel: Nat,
    /// Array contents before the kernel runs, installed as an initializer
    /// phase under the current one.
    pub initial_memory: BTreeMap<Nat, Nat>,
}

impl RunConfig {
    pub const DEFAULT_FUEL: Nat = 1_000_000;

    pub fn new(thread_set: impl IntoIterator<Item = Nat>, env: Env) -> Result<Self, ConfigError> {
        let thread_set: BTreeSet<Nat> = thread_set.into_iter().collect();
        if thread_set.is_empty() {
            return Err(ConfigError::EmptyThreadSet);
        }
        if thread_set.contains(&INIT_THREAD) {
            return Err(ConfigError::ReservedThread(INIT_THREAD));
        }
        Ok(RunConfig {
            thread_set,
            env,
            uninit_policy: UninitPolicy::Default(0),
            loop_fuel: Self::DEFAULT_FUEL,
            initial_memory: BTreeMap::new(),
        })
    }

    /// Threads `0..count`.
    pub fn threads(count: Nat, env: Env) -> Result<Self, ConfigError> {
        RunConfig::new(0..count, env)
    }

    pub fn with_fuel(mut self, fuel: Nat) -> Result<Self, ConfigError> {
        if fuel == 0 {
            return Err(ConfigError::ZeroFuel);
        }
        self.loop_fuel = fuel;
        Ok(self)
    }

    pub fn with_uninit(mut self, policy: UninitPolicy) -> Self {
        self.uninit_policy = policy;
        self
    }

    pub fn with_initial_memory(mut self, memory: impl IntoIterator<Item = (Nat, Nat)>) -> Self {
        self.initial_memory = memory.into_iter().collect();
        self
    }

    pub fn thread_set(&self) -> &BTreeSet<Nat> {
        &self.thread_set
    }

    pub fn loop_fuel(&self) -> Nat {
        self.loop_fuel
    }

    pub fn array_name(&self) -> &'static str {
        ARRAY_NAME
    }

    /// `[empty]`, or `[empty, initializer]` when initial memory is set.
    pub fn start_history(&self) -> History {
        let mut phases = vec![Phase::new()];
        if !self.initial_memory.is_empty() {
            phases.push(Phase::initializer(self.initial_memory.clone()));
        }
        History(phases)
    }
}
