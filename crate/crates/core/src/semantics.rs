//! Big-step lockstep semantics.
//!
//! Every thread runs the kernel independently, starting from its own record
//! in the current phase. A read sees the thread's own writes from the current
//! phase first and otherwise the most recent write in an earlier phase; other
//! threads' writes from the current phase stay invisible. The per-thread
//! records are merged into the new head phase.
//!
//! `sync` closes the current phase for all threads at once. It is evaluated by
//! replay: to compute phase `k` each thread re-runs from the start against the
//! already finalized phases `0..k` and stops at its `k`-th barrier.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{
    AccessRecord, ArithError, BoolExpr, Env, History, Kernel, KernelKind, Nat, NumExpr, Phase, RunConfig, Span,
    UninitPolicy, TID,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecErrorKind {
    UninitializedRead,
    AmbiguousLastwrite,
    DivisionByZero,
    ArithmeticOverflow,
    FuelExhausted,
    UnboundVariable,
    /// Evaluation needs a current phase to start from.
    EmptyHistory,
    /// Threads reached different numbers of barriers.
    BarrierDivergence,
    /// A synchronized protocol was given where a single phase was expected.
    SynchronizedProtocol,
}

impl ExecErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecErrorKind::UninitializedRead => "uninitialized_read",
            ExecErrorKind::AmbiguousLastwrite => "ambiguous_lastwrite",
            ExecErrorKind::DivisionByZero => "division_by_zero",
            ExecErrorKind::ArithmeticOverflow => "arithmetic_overflow",
            ExecErrorKind::FuelExhausted => "fuel_exhausted",
            ExecErrorKind::UnboundVariable => "unbound_variable",
            ExecErrorKind::EmptyHistory => "empty_history",
            ExecErrorKind::BarrierDivergence => "barrier_divergence",
            ExecErrorKind::SynchronizedProtocol => "synchronized_protocol",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
pub struct ExecError {
    pub kind: ExecErrorKind,
    pub tid: Option<Nat>,
    pub index: Option<Nat>,
    pub variable: Option<String>,
    pub span: Span,
}

impl ExecError {
    pub fn new(kind: ExecErrorKind) -> Self {
        ExecError {
            kind,
            tid: None,
            index: None,
            variable: None,
            span: Span::default(),
        }
    }

    fn unbound(name: &str) -> Self {
        ExecError {
            variable: Some(name.to_owned()),
            ..ExecError::new(ExecErrorKind::UnboundVariable)
        }
    }

    pub(crate) fn at(mut self, span: Span, tid: Nat) -> Self {
        if self.span.start == 0 && self.span.end == 0 {
            self.span = span;
        }
        self.tid.get_or_insert(tid);
        self
    }
}

impl From<ArithError> for ExecError {
    fn from(e: ArithError) -> Self {
        ExecError::new(match e {
            ArithError::DivisionByZero => ExecErrorKind::DivisionByZero,
            ArithError::Overflow => ExecErrorKind::ArithmeticOverflow,
        })
    }
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.kind.as_str())?;
        if let Some(tid) = self.tid {
            write!(f, " in thread {tid}")?;
        }
        if let Some(index) = self.index {
            write!(f, " at index {index}")?;
        }
        if let Some(var) = &self.variable {
            write!(f, " (variable `{var}`)")?;
        }
        Ok(())
    }
}

pub fn eval_num(env: &Env, n: &NumExpr) -> Result<Nat, ExecError> {
    match n {
        NumExpr::Lit(v) => Ok(*v),
        NumExpr::Var(name) => env.get(name).ok_or_else(|| ExecError::unbound(name)),
        NumExpr::Tid => env.get(TID).ok_or_else(|| ExecError::unbound(TID)),
        NumExpr::Bin(op, lhs, rhs) => {
            let l = eval_num(env, lhs)?;
            let r = eval_num(env, rhs)?;
            Ok(op.apply(l, r)?)
        }
    }
}

pub fn eval_bool(env: &Env, c: &BoolExpr) -> Result<bool, ExecError> {
    match c {
        BoolExpr::True => Ok(true),
        BoolExpr::False => Ok(false),
        BoolExpr::Cmp(rel, lhs, rhs) => Ok(rel.holds(eval_num(env, lhs)?, eval_num(env, rhs)?)),
        BoolExpr::Conn(conn, lhs, rhs) => Ok(conn.apply(eval_bool(env, lhs)?, eval_bool(env, rhs)?)),
    }
}

/// Result of looking up the most recent write to an index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LastWrite {
    Value(Nat),
    /// No phase wrote the index.
    Undefined,
    /// Several threads of the first phase that wrote the index disagree.
    /// Writers are listed by ascending tid.
    Ambiguous(Vec<(Nat, Nat)>),
}

/// Walks phases most recent first and returns the first phase's write to
/// `index`.
pub fn lastwrite_in<'a>(index: Nat, phases: impl IntoIterator<Item = &'a Phase>) -> LastWrite {
    for phase in phases {
        let writers: Vec<(Nat, Nat)> = phase
            .iter()
            .filter_map(|(tid, rec)| rec.writes.get(&index).map(|v| (*tid, *v)))
            .collect();
        match writers.as_slice() {
            [] => continue,
            [(_, v), rest @ ..] if rest.iter().all(|(_, w)| w == v) => return LastWrite::Value(*v),
            _ => return LastWrite::Ambiguous(writers),
        }
    }
    LastWrite::Undefined
}

pub fn lastwrite(index: Nat, history: &History) -> LastWrite {
    lastwrite_in(index, history.phases())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarningKind {
    /// An unwritten index was read and the configured default used.
    DefaultedRead { value: Nat },
    /// Disagreeing writers in an earlier phase; the lowest tid won.
    AmbiguousLastwrite { writer: Nat, value: Nat },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Warning {
    pub tid: Nat,
    pub index: Nat,
    #[serde(flatten)]
    pub kind: WarningKind,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            WarningKind::DefaultedRead { value } => write!(
                f,
                "thread {} read uninitialized A[{}]; using default {value}",
                self.tid, self.index
            ),
            WarningKind::AmbiguousLastwrite { writer, value } => write!(
                f,
                "thread {} read A[{}] written with different values in one phase; using {value} from thread {writer}",
                self.tid, self.index
            ),
        }
    }
}

/// One rule application.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub tid: Nat,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.tid, self.rule, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Execution {
    pub history: History,
    /// Number of phases at the front of `history` produced by this run.
    pub new_phases: usize,
    pub warnings: Vec<Warning>,
    pub trace: Vec<TraceStep>,
}

impl Execution {
    /// The produced phases, oldest first.
    pub fn produced(&self) -> impl Iterator<Item = &Phase> {
        self.history.phases()[..self.new_phases].iter().rev()
    }
}

enum Flow {
    Done,
    /// Stopped at the target barrier.
    Barrier,
}

struct ThreadEval<'a> {
    cfg: &'a RunConfig,
    tid: Nat,
    env: Env,
    fuel_used: Nat,
    own: AccessRecord,
    segment: usize,
    target: usize,
    /// Finalized phases of this run, oldest first.
    completed: &'a [Phase],
    /// Phases below the current one, most recent first.
    base: &'a [Phase],
    warnings: Vec<Warning>,
    trace: Option<Vec<TraceStep>>,
}

impl<'a> ThreadEval<'a> {
    fn new(
        cfg: &'a RunConfig,
        tid: Nat,
        own: AccessRecord,
        target: usize,
        completed: &'a [Phase],
        base: &'a [Phase],
        trace: bool,
    ) -> Self {
        let mut env = cfg.env.clone();
        env.insert(TID, tid);
        ThreadEval {
            cfg,
            tid,
            env,
            fuel_used: 0,
            own,
            segment: 0,
            target,
            completed,
            base,
            warnings: Vec::new(),
            trace: trace.then(Vec::new),
        }
    }

    fn live(&self) -> bool {
        self.segment == self.target
    }

    fn step(&mut self, rule: &'static str, detail: impl FnOnce() -> String) {
        if self.segment != self.target {
            return;
        }
        if let Some(trace) = &mut self.trace {
            trace.push(TraceStep {
                tid: self.tid,
                rule,
                detail: detail(),
            });
        }
    }

    fn num(&self, n: &NumExpr, span: Span) -> Result<Nat, ExecError> {
        eval_num(&self.env, n).map_err(|e| e.at(span, self.tid))
    }

    fn boolean(&self, c: &BoolExpr, span: Span) -> Result<bool, ExecError> {
        eval_bool(&self.env, c).map_err(|e| e.at(span, self.tid))
    }

    /// The value a read of `index` observes, with the rule that produced it.
    fn observe(&mut self, index: Nat, span: Span) -> Result<(Nat, &'static str), ExecError> {
        if let Some(v) = self.own.writes.get(&index) {
            return Ok((*v, "lastwrite-curr"));
        }
        let visible = self.completed[..self.segment].iter().rev().chain(self.base.iter());
        let err = |kind| ExecError {
            index: Some(index),
            ..ExecError::new(kind).at(span, self.tid)
        };
        match (lastwrite_in(index, visible), self.cfg.uninit_policy) {
            (LastWrite::Value(v), _) => Ok((v, "lastwrite-prev")),
            (LastWrite::Undefined, UninitPolicy::Strict) => Err(err(ExecErrorKind::UninitializedRead)),
            (LastWrite::Undefined, UninitPolicy::Default(v)) => {
                if self.live() {
                    self.warnings.push(Warning {
                        tid: self.tid,
                        index,
                        kind: WarningKind::DefaultedRead { value: v },
                    });
                }
                Ok((v, "lastwrite-undef"))
            }
            (LastWrite::Ambiguous(_), UninitPolicy::Strict) => Err(err(ExecErrorKind::AmbiguousLastwrite)),
            (LastWrite::Ambiguous(writers), UninitPolicy::Default(_)) => {
                let (writer, value) = writers[0];
                if self.live() {
                    self.warnings.push(Warning {
                        tid: self.tid,
                        index,
                        kind: WarningKind::AmbiguousLastwrite { writer, value },
                    });
                }
                Ok((value, "lastwrite-prev"))
            }
        }
    }

    fn eval(&mut self, k: &Kernel) -> Result<Flow, ExecError> {
        match &k.kind {
            KernelKind::Skip => {
                self.step("skip", String::new);
            }
            KernelKind::Write { index, payload } => {
                let y = self.num(index, k.span)?;
                let z = self.num(payload, k.span)?;
                self.own.writes.insert(y, z);
                self.step("write", || format!("A[{y}] := {z}"));
            }
            KernelKind::Read { binder, index, body } => {
                let y = self.num(index, k.span)?;
                let (z, how) = self.observe(y, k.span)?;
                self.own.reads.insert(y);
                self.step("read", || format!("{binder} = A[{y}] = {z} by {how}"));
                self.env.insert(binder.clone(), z);
                let flow = self.eval(body);
                self.env.remove(binder);
                return flow;
            }
            KernelKind::Seq(first, second) => {
                self.step("seq", String::new);
                if let Flow::Barrier = self.eval(first)? {
                    return Ok(Flow::Barrier);
                }
                return self.eval(second);
            }
            KernelKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                return if self.boolean(cond, k.span)? {
                    self.step("if-t", || cond.to_string());
                    self.eval(then_branch)
                } else {
                    self.step("if-f", || cond.to_string());
                    self.eval(else_branch)
                };
            }
            KernelKind::For { binder, lo, hi, body } => {
                let lo = self.num(lo, k.span)?;
                let hi = self.num(hi, k.span)?;
                for value in lo..hi {
                    if self.fuel_used >= self.cfg.loop_fuel() {
                        return Err(ExecError::new(ExecErrorKind::FuelExhausted).at(k.span, self.tid));
                    }
                    self.fuel_used += 1;
                    self.step("for-2", || format!("{binder} = {value}"));
                    self.env.insert(binder.clone(), value);
                    let flow = self.eval(body);
                    self.env.remove(binder);
                    if let Flow::Barrier = flow? {
                        return Ok(Flow::Barrier);
                    }
                }
                self.step("for-1", || format!("{binder} = {}", lo.max(hi)));
            }
            KernelKind::Sync => {
                if self.live() {
                    return Ok(Flow::Barrier);
                }
                self.segment += 1;
                self.own = AccessRecord::default();
                self.step("sync", String::new);
            }
        }
        Ok(Flow::Done)
    }
}

/// Evaluates one thread against `prior` (the phases below the current one),
/// starting from the thread's own current record. Stops at the first barrier.
pub fn eval_thread(
    cfg: &RunConfig,
    prior: &History,
    tid: Nat,
    own: AccessRecord,
    kernel: &Kernel,
) -> Result<AccessRecord, ExecError> {
    let mut thread = ThreadEval::new(cfg, tid, own, 0, &[], prior.phases(), false);
    thread.eval(kernel)?;
    Ok(thread.own)
}

/// Runs `kernel` on every thread of `cfg` from the head of `history` and
/// returns `Q :: tail`, with one extra phase per barrier.
pub fn run(cfg: &RunConfig, history: &History, kernel: &Kernel) -> Result<History, ExecError> {
    execute(cfg, history, kernel, false).map(|e| e.history)
}

pub fn execute(cfg: &RunConfig, history: &History, kernel: &Kernel, trace: bool) -> Result<Execution, ExecError> {
    let head = history
        .head()
        .ok_or_else(|| ExecError::new(ExecErrorKind::EmptyHistory))?;
    let base = &history.phases()[1..];
    let mut completed: Vec<Phase> = Vec::new();
    let mut warnings = Vec::new();
    let mut steps = Vec::new();

    loop {
        let target = completed.len();
        let mut phase = Phase::new();
        let mut at_barrier: Vec<(Nat, bool)> = Vec::new();
        for &tid in cfg.thread_set() {
            let own = if target == 0 {
                head.record(tid).cloned().unwrap_or_default()
            } else {
                AccessRecord::default()
            };
            let mut thread = ThreadEval::new(cfg, tid, own, target, &completed, base, trace);
            let flow = thread.eval(kernel)?;
            at_barrier.push((tid, matches!(flow, Flow::Barrier)));
            warnings.append(&mut thread.warnings);
            steps.extend(thread.trace.unwrap_or_default());
            phase.insert(tid, thread.own);
        }
        completed.push(phase);
        let waiting = at_barrier.iter().filter(|(_, b)| *b).count();
        if waiting == 0 {
            break;
        }
        if waiting < at_barrier.len() {
            let (tid, _) = at_barrier.iter().find(|(_, b)| !*b).expect("some thread finished");
            return Err(ExecError {
                tid: Some(*tid),
                ..ExecError::new(ExecErrorKind::BarrierDivergence)
            });
        }
    }

    let new_phases = completed.len();
    let mut phases: Vec<Phase> = completed.into_iter().rev().collect();
    phases.extend(base.iter().cloned());
    Ok(Execution {
        history: History(phases),
        new_phases,
        warnings,
        trace: steps,
    })
}
