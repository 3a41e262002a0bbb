//! SMT-LIB2 race queries over symbolic thread pairs.
//!
//! Each pair of access sites (at least one a write) becomes a Boolean
//! `race_k` that holds when both sites are reachable for threads `i` and `j`
//! at the same index. Loop variables get fresh bounded integers per site
//! instead of being unrolled.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::Write as _;
use std::process::{Command, Stdio};

use serde::Serialize;
use thiserror::Error;

use crate::ast::{BoolExpr, Conn, Mode, Nat, NumExpr, NumOp, Protocol, ProtocolKind, Rel, Span};

/// The threads a query ranges over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ThreadSpace {
    /// `{0, …, n-1}`.
    Count(Nat),
    Set(BTreeSet<Nat>),
    /// `{0, …, p-1}` for a bounded parameter `p`.
    Param(String),
}

/// Admissible values of a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamDomain {
    Exact(Nat),
    /// Inclusive on both ends.
    Range(Nat, Nat),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "role")]
pub enum SymbolRole {
    ThreadI,
    ThreadJ,
    LoopVar { binder: String },
    EnvParam { name: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SymbolInfo {
    #[serde(flatten)]
    pub role: SymbolRole,
    pub span: Option<Span>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairInfo {
    pub first: Span,
    pub second: Span,
    pub first_mode: Mode,
    pub second_mode: Mode,
    /// Loop symbols around the first access, evaluated by thread `i`.
    pub first_symbols: Vec<String>,
    /// Loop symbols around the second access, evaluated by thread `j`.
    pub second_symbols: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SymbolicQuery {
    pub smtlib_text: String,
    pub variable_legend: BTreeMap<String, SymbolInfo>,
    pub access_pair_legend: BTreeMap<String, PairInfo>,
    /// Set when an expression falls outside linear integer arithmetic; the
    /// query is then not meant for a solver.
    pub unsupported: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("{0}: barriers are outside the symbolic fragment")]
    Synchronized(Span),
    #[error("parameter `{0}` has neither a value nor bounds")]
    UnboundedParam(String),
    #[error("parameter `{name}` has an empty range {lo}..{hi}")]
    EmptyRange { name: String, lo: Nat, hi: Nat },
}

#[derive(Clone, Copy)]
enum Guard<'a> {
    Cond(&'a BoolExpr, bool),
    Loop {
        binder: &'a str,
        lo: &'a NumExpr,
        hi: &'a NumExpr,
        span: Span,
    },
}

struct Site<'a> {
    mode: Mode,
    index: &'a NumExpr,
    span: Span,
    guards: Vec<Guard<'a>>,
}

fn collect<'a>(p: &'a Protocol, guards: &mut Vec<Guard<'a>>, out: &mut Vec<Site<'a>>) -> Result<(), EncodeError> {
    match &p.kind {
        ProtocolKind::Skip => {}
        ProtocolKind::Access { mode, index } => out.push(Site {
            mode: *mode,
            index,
            span: p.span,
            guards: guards.clone(),
        }),
        ProtocolKind::Seq(a, b) => {
            collect(a, guards, out)?;
            collect(b, guards, out)?;
        }
        ProtocolKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            guards.push(Guard::Cond(cond, true));
            collect(then_branch, guards, out)?;
            guards.pop();
            guards.push(Guard::Cond(cond, false));
            collect(else_branch, guards, out)?;
            guards.pop();
        }
        ProtocolKind::For { binder, lo, hi, body } => {
            guards.push(Guard::Loop {
                binder,
                lo,
                hi,
                span: p.span,
            });
            collect(body, guards, out)?;
            guards.pop();
        }
        ProtocolKind::Sync | ProtocolKind::SSeq(..) | ProtocolKind::SFor { .. } => {
            return Err(EncodeError::Synchronized(p.span))
        }
    }
    Ok(())
}

struct Encoder<'a> {
    env: &'a BTreeMap<String, ParamDomain>,
    params: BTreeSet<String>,
    loop_symbols: Vec<(String, String, Span)>,
    unsupported: Option<String>,
}

fn param_symbol(name: &str) -> String {
    format!("p_{name}")
}

impl Encoder<'_> {
    fn num(&mut self, e: &NumExpr, tid: &str, scope: &[(&str, String)]) -> Result<String, EncodeError> {
        Ok(match e {
            NumExpr::Tid => tid.to_string(),
            NumExpr::Lit(n) => n.to_string(),
            NumExpr::Var(name) => match scope.iter().rev().find(|(b, _)| b == name) {
                Some((_, sym)) => sym.clone(),
                None => {
                    if !self.env.contains_key(name) {
                        return Err(EncodeError::UnboundedParam(name.clone()));
                    }
                    self.params.insert(name.clone());
                    param_symbol(name)
                }
            },
            NumExpr::Bin(op, l, r) => {
                let (a, b) = (self.num(l, tid, scope)?, self.num(r, tid, scope)?);
                match op {
                    NumOp::Add => format!("(+ {a} {b})"),
                    NumOp::Monus => format!("(ite (>= {a} {b}) (- {a} {b}) 0)"),
                    NumOp::Mul => {
                        if !matches!(**l, NumExpr::Lit(_)) && !matches!(**r, NumExpr::Lit(_)) {
                            self.flag(format!("non-linear product `{e}`"));
                        }
                        format!("(* {a} {b})")
                    }
                    NumOp::Div | NumOp::Mod => {
                        if !matches!(**r, NumExpr::Lit(n) if n > 0) {
                            self.flag(format!("`{e}` divides by a non-constant or zero"));
                        }
                        let f = if *op == NumOp::Div { "div" } else { "mod" };
                        format!("({f} {a} {b})")
                    }
                }
            }
        })
    }

    fn flag(&mut self, message: String) {
        self.unsupported.get_or_insert(message);
    }

    fn boolean(&mut self, c: &BoolExpr, tid: &str, scope: &[(&str, String)]) -> Result<String, EncodeError> {
        Ok(match c {
            BoolExpr::True => "true".into(),
            BoolExpr::False => "false".into(),
            BoolExpr::Cmp(rel, l, r) => {
                let (a, b) = (self.num(l, tid, scope)?, self.num(r, tid, scope)?);
                let f = match rel {
                    Rel::Eq => "=",
                    Rel::Ne => "distinct",
                    Rel::Lt => "<",
                    Rel::Le => "<=",
                    Rel::Gt => ">",
                    Rel::Ge => ">=",
                };
                format!("({f} {a} {b})")
            }
            BoolExpr::Conn(conn, l, r) => {
                let f = if *conn == Conn::And { "and" } else { "or" };
                format!("({f} {} {})", self.boolean(l, tid, scope)?, self.boolean(r, tid, scope)?)
            }
        })
    }

    /// Constraints under which `site` is reached by thread `tid`, and its index term.
    fn side(&mut self, site: &Site, tid: &str, symbols: &mut Vec<String>) -> Result<(Vec<String>, String), EncodeError> {
        let mut scope: Vec<(&str, String)> = Vec::new();
        let mut constraints = Vec::new();
        for guard in &site.guards {
            match *guard {
                Guard::Cond(c, polarity) => {
                    let t = self.boolean(c, tid, &scope)?;
                    constraints.push(if polarity { t } else { format!("(not {t})") });
                }
                Guard::Loop { binder, lo, hi, span } => {
                    let sym = format!("x{}", self.loop_symbols.len());
                    let lo = self.num(lo, tid, &scope)?;
                    let hi = self.num(hi, tid, &scope)?;
                    constraints.push(format!("(<= {lo} {sym})"));
                    constraints.push(format!("(< {sym} {hi})"));
                    self.loop_symbols.push((sym.clone(), binder.to_string(), span));
                    symbols.push(sym.clone());
                    scope.push((binder, sym));
                }
            }
        }
        let index = self.num(site.index, tid, &scope)?;
        Ok((constraints, index))
    }
}

/// Builds the race query of an unsynchronized protocol.
pub fn encode(
    protocol: &Protocol,
    threads: &ThreadSpace,
    env: &BTreeMap<String, ParamDomain>,
) -> Result<SymbolicQuery, EncodeError> {
    for (name, domain) in env {
        if let ParamDomain::Range(lo, hi) = *domain {
            if lo > hi {
                return Err(EncodeError::EmptyRange {
                    name: name.clone(),
                    lo,
                    hi,
                });
            }
        }
    }
    let mut sites = Vec::new();
    collect(protocol, &mut Vec::new(), &mut sites)?;

    let mut enc = Encoder {
        env,
        params: BTreeSet::new(),
        loop_symbols: Vec::new(),
        unsupported: None,
    };
    if let ThreadSpace::Param(p) = threads {
        if !env.contains_key(p) {
            return Err(EncodeError::UnboundedParam(p.clone()));
        }
        enc.params.insert(p.clone());
    }

    let mut pairs = Vec::new();
    let mut pair_legend = BTreeMap::new();
    for (n, a) in sites.iter().enumerate() {
        for b in &sites[n..] {
            if a.mode == Mode::Rd && b.mode == Mode::Rd {
                continue;
            }
            let label = format!("race_{}", pairs.len());
            let (mut first_symbols, mut second_symbols) = (Vec::new(), Vec::new());
            let (mut conj, ia) = enc.side(a, "i", &mut first_symbols)?;
            let (cb, ib) = enc.side(b, "j", &mut second_symbols)?;
            conj.extend(cb);
            conj.push(format!("(= {ia} {ib})"));
            pairs.push((label.clone(), conj));
            pair_legend.insert(
                label,
                PairInfo {
                    first: a.span,
                    second: b.span,
                    first_mode: a.mode,
                    second_mode: b.mode,
                    first_symbols,
                    second_symbols,
                },
            );
        }
    }

    let mut legend = BTreeMap::new();
    legend.insert(
        "i".to_string(),
        SymbolInfo {
            role: SymbolRole::ThreadI,
            span: None,
        },
    );
    legend.insert(
        "j".to_string(),
        SymbolInfo {
            role: SymbolRole::ThreadJ,
            span: None,
        },
    );
    for name in &enc.params {
        legend.insert(
            param_symbol(name),
            SymbolInfo {
                role: SymbolRole::EnvParam { name: name.clone() },
                span: None,
            },
        );
    }
    for (sym, binder, span) in &enc.loop_symbols {
        legend.insert(
            sym.clone(),
            SymbolInfo {
                role: SymbolRole::LoopVar { binder: binder.clone() },
                span: Some(*span),
            },
        );
    }

    if let Some(reason) = enc.unsupported {
        return Ok(SymbolicQuery {
            smtlib_text: format!("; unsupported: {reason}\n"),
            variable_legend: legend,
            access_pair_legend: pair_legend,
            unsupported: Some(reason),
        });
    }

    let mut t = String::new();
    t.push_str("(set-logic QF_LIA)\n");
    let mut ints = vec!["i".to_string(), "j".to_string()];
    ints.extend(enc.params.iter().map(|p| param_symbol(p)));
    ints.extend(enc.loop_symbols.iter().map(|(s, _, _)| s.clone()));
    for sym in &ints {
        let _ = writeln!(t, "(declare-const {sym} Int)");
    }
    for (label, _) in &pairs {
        let _ = writeln!(t, "(declare-const {label} Bool)");
    }
    for tid in ["i", "j"] {
        let domain = match threads {
            ThreadSpace::Count(n) => format!("(and (<= 0 {tid}) (< {tid} {n}))"),
            ThreadSpace::Param(p) => format!("(and (<= 0 {tid}) (< {tid} {}))", param_symbol(p)),
            ThreadSpace::Set(set) => match set.len() {
                0 => "false".to_string(),
                1 => format!("(= {tid} {})", set.first().unwrap()),
                _ => format!("(or {})", set.iter().map(|v| format!("(= {tid} {v})")).collect::<Vec<_>>().join(" ")),
            },
        };
        let _ = writeln!(t, "(assert {domain})");
    }
    t.push_str("(assert (distinct i j))\n");
    for name in &enc.params {
        let sym = param_symbol(name);
        let _ = match env[name] {
            ParamDomain::Exact(v) => writeln!(t, "(assert (= {sym} {v}))"),
            ParamDomain::Range(lo, hi) => writeln!(t, "(assert (and (<= {lo} {sym}) (<= {sym} {hi})))"),
        };
    }
    for (sym, _, _) in &enc.loop_symbols {
        let _ = writeln!(t, "(assert (<= 0 {sym}))");
    }
    for (label, conj) in &pairs {
        let _ = writeln!(t, "(assert (= {label} (and {})))", conj.join(" "));
    }
    if pairs.is_empty() {
        t.push_str("(assert false)\n");
    } else {
        let labels: Vec<&str> = pairs.iter().map(|(l, _)| l.as_str()).collect();
        let _ = writeln!(t, "(assert (or {}))", labels.join(" "));
    }
    t.push_str("(check-sat)\n(get-model)\n");

    Ok(SymbolicQuery {
        smtlib_text: t,
        variable_legend: legend,
        access_pair_legend: pair_legend,
        unsupported: None,
    })
}

/// Concrete values of a satisfying model, restricted to one racing pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub i: Nat,
    pub j: Nat,
    pub pair: String,
    pub first: Span,
    pub second: Span,
    pub params: BTreeMap<String, Nat>,
    pub loops: Vec<LoopValue>,
}

/// A loop variable around one of the racing accesses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoopValue {
    pub symbol: String,
    pub binder: String,
    pub tid: Nat,
    pub value: Nat,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i={}, j={}", self.i, self.j)?;
        for (name, v) in &self.params {
            write!(f, ", {name}={v}")?;
        }
        for l in &self.loops {
            write!(f, ", {}={} in thread {}", l.binder, l.value, l.tid)?;
        }
        write!(f, "; accesses at {} and {}", self.first, self.second)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "detail")]
pub enum SolveOutcome {
    Sat(Witness),
    Unsat,
    Unknown(String),
    SolverError(String),
}

/// Runs `solver_command` (whitespace-separated program and arguments) on the
/// query. The first output token decides the verdict.
pub fn solve(query: &SymbolicQuery, solver_command: &str) -> SolveOutcome {
    if let Some(reason) = &query.unsupported {
        return SolveOutcome::Unknown(format!("unsupported: {reason}"));
    }
    let mut words = solver_command.split_whitespace();
    let Some(program) = words.next() else {
        return SolveOutcome::SolverError("empty solver command".into());
    };
    let child = Command::new(program)
        .args(words)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn();
    let mut child = match child {
        Ok(c) => c,
        Err(e) => return SolveOutcome::SolverError(format!("cannot run `{solver_command}`: {e}")),
    };
    if let Some(mut stdin) = child.stdin.take() {
        if let Err(e) = stdin.write_all(query.smtlib_text.as_bytes()) {
            return SolveOutcome::SolverError(format!("writing query: {e}"));
        }
    }
    let output = match child.wait_with_output() {
        Ok(o) => o,
        Err(e) => return SolveOutcome::SolverError(format!("waiting for solver: {e}")),
    };
    let stdout = String::from_utf8_lossy(&output.stdout);
    let (first, rest) = match stdout.trim_start().split_once(char::is_whitespace) {
        Some((a, b)) => (a, b),
        None => (stdout.trim(), ""),
    };
    match first {
        // Solvers exit non-zero on the trailing `get-model` after unsat.
        "unsat" => SolveOutcome::Unsat,
        "unknown" => SolveOutcome::Unknown(rest.trim().to_string()),
        "sat" if output.status.success() => match decode(query, rest) {
            Some(w) => SolveOutcome::Sat(w),
            None => SolveOutcome::SolverError(format!("unparseable model: {}", rest.trim())),
        },
        _ => SolveOutcome::SolverError(format!(
            "solver exited with {}: {}{}",
            output.status,
            stdout.trim(),
            String::from_utf8_lossy(&output.stderr).trim()
        )),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ModelValue {
    Int(i128),
    Bool(bool),
}

fn tokens(text: &str) -> Vec<String> {
    text.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(str::to_string).collect()
}

fn parse_model(text: &str) -> Option<BTreeMap<String, ModelValue>> {
    let toks = tokens(text);
    let mut values = BTreeMap::new();
    let mut k = 0;
    while k < toks.len() {
        if toks[k] != "define-fun" {
            k += 1;
            continue;
        }
        let name = toks.get(k + 1)?.clone();
        if toks.get(k + 2)? != "(" || toks.get(k + 3)? != ")" {
            k += 1;
            continue;
        }
        let sort = toks.get(k + 4)?.as_str();
        let mut p = k + 5;
        let value = match (sort, toks.get(p)?.as_str()) {
            ("Bool", "true") => ModelValue::Bool(true),
            ("Bool", "false") => ModelValue::Bool(false),
            ("Int", "(") if toks.get(p + 1)? == "-" => {
                p += 2;
                ModelValue::Int(-toks.get(p)?.parse::<i128>().ok()?)
            }
            ("Int", v) => ModelValue::Int(v.parse().ok()?),
            _ => return None,
        };
        values.insert(name, value);
        k = p + 1;
    }
    Some(values)
}

fn decode(query: &SymbolicQuery, model: &str) -> Option<Witness> {
    let values = parse_model(model)?;
    let int = |sym: &str| match values.get(sym) {
        Some(ModelValue::Int(v)) => Nat::try_from(*v).ok(),
        // Unconstrained symbols may be left out of the model.
        None => Some(0),
        _ => None,
    };
    let (label, info) = query
        .access_pair_legend
        .iter()
        .find(|(label, _)| values.get(label.as_str()) == Some(&ModelValue::Bool(true)))?;
    let mut params = BTreeMap::new();
    for (sym, s) in &query.variable_legend {
        if let SymbolRole::EnvParam { name } = &s.role {
            params.insert(name.clone(), int(sym)?);
        }
    }
    let (i, j) = (int("i")?, int("j")?);
    let mut loops = Vec::new();
    let sides = info.first_symbols.iter().map(|s| (s, i)).chain(info.second_symbols.iter().map(|s| (s, j)));
    for (sym, tid) in sides {
        let SymbolRole::LoopVar { binder } = &query.variable_legend.get(sym)?.role else {
            return None;
        };
        loops.push(LoopValue {
            symbol: sym.clone(),
            binder: binder.clone(),
            tid,
            value: int(sym)?,
        });
    }
    Some(Witness {
        i,
        j,
        pair: label.clone(),
        first: info.first,
        second: info.second,
        params,
        loops,
    })
}
