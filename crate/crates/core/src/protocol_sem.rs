//! Denotation of protocols as sets of access values, and the access values
//! of an execution phase.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::ast::{AccessValue, Env, Mode, Nat, Phase, Protocol, ProtocolKind, RunConfig, INIT_THREAD, TID};
use crate::semantics::{eval_bool, eval_num, ExecError, ExecErrorKind};

/// A finite set of access values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lambda(BTreeSet<AccessValue>);

impl Lambda {
    pub fn new() -> Self {
        Lambda::default()
    }

    pub fn insert(&mut self, value: AccessValue) -> bool {
        self.0.insert(value)
    }

    pub fn contains(&self, value: &AccessValue) -> bool {
        self.0.contains(value)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AccessValue> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_subset(&self, other: &Lambda) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn extend(&mut self, other: &Lambda) {
        self.0.extend(other.0.iter().copied());
    }

    pub fn difference(&self, other: &Lambda) -> Lambda {
        Lambda(self.0.difference(&other.0).copied().collect())
    }

    /// `i:o[y]` strings, ascending by tid, then index, reads first.
    pub fn to_strings(&self) -> Vec<String> {
        self.0.iter().map(ToString::to_string).collect()
    }
}

impl FromIterator<AccessValue> for Lambda {
    fn from_iter<T: IntoIterator<Item = AccessValue>>(iter: T) -> Self {
        Lambda(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a Lambda {
    type Item = &'a AccessValue;
    type IntoIter = std::collections::btree_set::Iter<'a, AccessValue>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl Serialize for Lambda {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter().map(ToString::to_string))
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_strings().join(", "))
    }
}

/// Access values of a phase. Written values are dropped; the initializer
/// pseudo-thread is skipped.
pub fn accesses_of_phase(phase: &Phase) -> Lambda {
    let mut out = Lambda::new();
    for (&tid, record) in phase.iter() {
        if tid == INIT_THREAD {
            continue;
        }
        for &index in &record.reads {
            out.insert(AccessValue::new(tid, Mode::Rd, index));
        }
        for &index in record.writes.keys() {
            out.insert(AccessValue::new(tid, Mode::Wr, index));
        }
    }
    out
}

/// Evaluates an unsynchronized protocol over every thread of `cfg`.
pub fn eval_protocol(cfg: &RunConfig, protocol: &Protocol) -> Result<Lambda, ExecError> {
    if protocol.is_synchronized() {
        return Err(ExecError {
            span: protocol.span,
            ..ExecError::new(ExecErrorKind::SynchronizedProtocol)
        });
    }
    let mut phases = eval_protocol_phases(cfg, protocol)?;
    Ok(phases.pop().unwrap_or_default())
}

/// Evaluates a protocol to one set per barrier-delimited phase, oldest first.
/// An unsynchronized protocol yields exactly one phase.
pub fn eval_protocol_phases(cfg: &RunConfig, protocol: &Protocol) -> Result<Vec<Lambda>, ExecError> {
    let mut merged: Vec<Lambda> = Vec::new();
    for &tid in cfg.thread_set() {
        let mut env = cfg.env.clone();
        env.insert(TID, tid);
        let mut thread = ThreadProtocol {
            tid,
            env,
            fuel_left: cfg.loop_fuel(),
            phases: vec![Lambda::new()],
        };
        thread.eval(protocol)?;
        if merged.is_empty() {
            merged = thread.phases;
        } else if merged.len() != thread.phases.len() {
            return Err(ExecError {
                tid: Some(tid),
                ..ExecError::new(ExecErrorKind::BarrierDivergence)
            });
        } else {
            for (acc, phase) in merged.iter_mut().zip(&thread.phases) {
                acc.extend(phase);
            }
        }
    }
    Ok(merged)
}

struct ThreadProtocol {
    tid: Nat,
    env: Env,
    fuel_left: Nat,
    phases: Vec<Lambda>,
}

impl ThreadProtocol {
    fn eval(&mut self, p: &Protocol) -> Result<(), ExecError> {
        let tid = self.tid;
        let at = |e: ExecError| e.at(p.span, tid);
        match &p.kind {
            ProtocolKind::Skip => {}
            ProtocolKind::Access { mode, index } => {
                let y = eval_num(&self.env, index).map_err(at)?;
                let value = AccessValue::new(self.tid, *mode, y);
                self.phases.last_mut().expect("at least one phase").insert(value);
            }
            ProtocolKind::Seq(first, second) | ProtocolKind::SSeq(first, second) => {
                self.eval(first)?;
                self.eval(second)?;
            }
            ProtocolKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                if eval_bool(&self.env, cond).map_err(at)? {
                    self.eval(then_branch)?;
                } else {
                    self.eval(else_branch)?;
                }
            }
            ProtocolKind::For { binder, lo, hi, body } | ProtocolKind::SFor { binder, lo, hi, body } => {
                let lo = eval_num(&self.env, lo).map_err(at)?;
                let hi = eval_num(&self.env, hi).map_err(at)?;
                for value in lo..hi {
                    if self.fuel_left == 0 {
                        return Err(at(ExecError::new(ExecErrorKind::FuelExhausted)));
                    }
                    self.fuel_left -= 1;
                    self.env.insert(binder.clone(), value);
                    let r = self.eval(body);
                    self.env.remove(binder);
                    r?;
                }
            }
            ProtocolKind::Sync => self.phases.push(Lambda::new()),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::AccessRecord;
    use crate::frontend::parse_protocol;

    fn cfg(threads: Nat, m: Option<Nat>) -> RunConfig {
        let env = m.map(|m| Env::new().with("M", m)).unwrap_or_default();
        RunConfig::threads(threads, env).unwrap()
    }

    #[test]
    fn racy_protocol_one_iteration() {
        let u = parse_protocol("forU x in 0..M { rd[x]; wr[x] }").unwrap();
        let l = eval_protocol(&cfg(2, Some(1)), &u).unwrap();
        assert_eq!(l.to_strings(), ["0:rd[0]", "0:wr[0]", "1:rd[0]", "1:wr[0]"]);
    }

    #[test]
    fn drf_protocol() {
        let u = parse_protocol("if (tid=0){wr[0]}else{skip}").unwrap();
        let l = eval_protocol(&cfg(2, None), &u).unwrap();
        assert_eq!(l, Lambda::from_iter([AccessValue::wr(0, 0)]));
    }

    #[test]
    fn skip_is_empty() {
        assert!(eval_protocol(&cfg(2, None), &Protocol::skip()).unwrap().is_empty());
    }

    #[test]
    fn phase_accesses() {
        let rec = AccessRecord {
            reads: [0].into(),
            writes: [(0, 1)].into(),
        };
        let phase = Phase([(0, rec.clone()), (1, rec)].into());
        assert_eq!(accesses_of_phase(&phase).to_strings(), ["0:rd[0]", "0:wr[0]", "1:rd[0]", "1:wr[0]"]);
        assert!(accesses_of_phase(&Phase::new()).is_empty());
        let single = Phase(
            [(
                0,
                AccessRecord {
                    reads: Default::default(),
                    writes: [(0, 0)].into(),
                },
            )]
            .into(),
        );
        assert_eq!(accesses_of_phase(&single).to_strings(), ["0:wr[0]"]);
        assert!(accesses_of_phase(&Phase::initializer([(3, 1)])).is_empty());
    }

    #[test]
    fn unbound_and_fuel_errors() {
        let u = parse_protocol("wr[N]").unwrap();
        assert_eq!(eval_protocol(&cfg(1, None), &u).unwrap_err().kind, ExecErrorKind::UnboundVariable);
        let u = parse_protocol("forU i in 0..5 { wr[i] }").unwrap();
        let c = cfg(1, None).with_fuel(4).unwrap();
        assert_eq!(eval_protocol(&c, &u).unwrap_err().kind, ExecErrorKind::FuelExhausted);
    }

    #[test]
    fn synchronized_protocols_evaluate_per_phase() {
        let p = parse_protocol("wr[tid]; sync; rd[1 - tid]").unwrap();
        assert_eq!(eval_protocol(&cfg(2, None), &p).unwrap_err().kind, ExecErrorKind::SynchronizedProtocol);
        let phases = eval_protocol_phases(&cfg(2, None), &p).unwrap();
        let shown: Vec<Vec<String>> = phases.iter().map(Lambda::to_strings).collect();
        assert_eq!(shown, [vec!["0:wr[0]", "1:wr[1]"], vec!["0:rd[1]", "1:rd[0]"]]);
        let p = parse_protocol("forS r in 0..2 { wr[r]; sync }").unwrap();
        assert_eq!(eval_protocol_phases(&cfg(1, None), &p).unwrap().len(), 3);
    }

    #[test]
    fn serializes_as_sorted_strings() {
        let l = Lambda::from_iter([AccessValue::wr(1, 0), AccessValue::rd(0, 2), AccessValue::wr(0, 2)]);
        assert_eq!(serde_json::to_string(&l).unwrap(), r#"["0:rd[2]","0:wr[2]","1:wr[0]"]"#);
    }
}
