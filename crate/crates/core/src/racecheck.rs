//! Data races over access sets, race reports, and the differential check
//! between execution and protocol.

use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::ast::{AccessValue, History, Kernel, Mode, Nat, RunConfig};
use crate::protocol_sem::{accesses_of_phase, eval_protocol_phases, Lambda};
use crate::semantics::{execute, ExecError};
use crate::typing::{infer, Typability, TypeContext, TypeError};

/// Two accesses to `index` by distinct threads, at least one a write.
/// `first.tid < second.tid`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Race {
    pub index: Nat,
    pub first: AccessValue,
    pub second: AccessValue,
}

impl Race {
    /// Orders the pair canonically; `None` unless the accesses conflict.
    pub fn new(a: AccessValue, b: AccessValue) -> Option<Race> {
        if a.index != b.index || a.tid == b.tid || (a.mode == Mode::Rd && b.mode == Mode::Rd) {
            return None;
        }
        let (first, second) = if a.tid < b.tid { (a, b) } else { (b, a) };
        Some(Race {
            index: a.index,
            first,
            second,
        })
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} vs {}", self.first, self.second)
    }
}

struct Side<'a>(&'a AccessValue);

impl Serialize for Side<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Access", 2)?;
        s.serialize_field("tid", &self.0.tid)?;
        s.serialize_field("mode", &self.0.mode)?;
        s.end()
    }
}

impl Serialize for Race {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Race", 3)?;
        s.serialize_field("index", &self.index)?;
        s.serialize_field("a", &Side(&self.first))?;
        s.serialize_field("b", &Side(&self.second))?;
        s.end()
    }
}

/// All conflicting pairs, ordered by index, then thread pair, then modes.
pub fn races_of(lambda: &Lambda) -> Vec<Race> {
    let accesses: Vec<&AccessValue> = lambda.iter().collect();
    let mut by_index: std::collections::BTreeMap<Nat, Vec<AccessValue>> = Default::default();
    for a in accesses {
        by_index.entry(a.index).or_default().push(*a);
    }
    let mut races = Vec::new();
    for group in by_index.values() {
        for (n, a) in group.iter().enumerate() {
            for b in &group[n + 1..] {
                races.extend(Race::new(*a, *b));
            }
        }
    }
    races.sort_by_key(|r| (r.index, r.first.tid, r.second.tid, r.first.mode, r.second.mode));
    races.dedup();
    races
}

pub fn is_drf_history(history: &History) -> bool {
    history.phases().iter().all(|p| races_of(&accesses_of_phase(p)).is_empty())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Drf,
    Racy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmClass {
    /// Racy and typable: the race happens in the execution.
    TrueAlarm,
    /// Racy but ill-typed.
    UnverifiedAlarm,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RaceReport {
    pub verdict: Verdict,
    pub typability: Typability,
    pub alarm_class: AlarmClass,
    pub races: Vec<Race>,
    pub type_error: Option<TypeError>,
    pub warnings: Vec<String>,
}

impl RaceReport {
    fn new(typability: Typability, races: Vec<Race>) -> Self {
        let verdict = if races.is_empty() { Verdict::Drf } else { Verdict::Racy };
        let alarm_class = match (verdict, typability) {
            (Verdict::Drf, _) => AlarmClass::NotApplicable,
            (Verdict::Racy, Typability::Typable) => AlarmClass::TrueAlarm,
            (Verdict::Racy, Typability::IllTyped) => AlarmClass::UnverifiedAlarm,
        };
        RaceReport {
            verdict,
            typability,
            alarm_class,
            races,
            type_error: None,
            warnings: Vec::new(),
        }
    }
}

fn races_across(phases: impl IntoIterator<Item = Lambda>) -> Vec<Race> {
    let mut races: Vec<Race> = phases.into_iter().flat_map(|l| races_of(&l)).collect();
    races.sort_by_key(|r| (r.index, r.first.tid, r.second.tid, r.first.mode, r.second.mode));
    races.dedup();
    races
}

/// Analyzes `kernel` with context `{tid} ∪ dom(env)`.
pub fn analyze(cfg: &RunConfig, kernel: &Kernel) -> Result<RaceReport, ExecError> {
    analyze_in(&TypeContext::for_kernel(cfg.env.names()), cfg, kernel)
}

/// Typable kernels are judged on their protocol. Ill-typed kernels fall back
/// to the access set of one concrete execution.
pub fn analyze_in(ctx: &TypeContext, cfg: &RunConfig, kernel: &Kernel) -> Result<RaceReport, ExecError> {
    match infer(ctx, kernel) {
        Ok(protocol) => {
            let phases = eval_protocol_phases(cfg, &protocol)?;
            Ok(RaceReport::new(Typability::Typable, races_across(phases)))
        }
        Err(type_error) => {
            let ex = execute(cfg, &cfg.start_history(), kernel, false)?;
            let races = races_across(ex.produced().map(accesses_of_phase));
            let mut report = RaceReport::new(Typability::IllTyped, races);
            report.type_error = Some(type_error);
            report.warnings = ex.warnings.iter().map(ToString::to_string).collect();
            Ok(report)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TheoremOutcome {
    /// Both sides agree; carries the access set of the final phase.
    Ok(Lambda),
    /// Symmetric difference of the first disagreeing phase.
    Mismatch {
        phase: usize,
        only_exec: Lambda,
        only_proto: Lambda,
    },
    IllTyped(TypeError),
    ExecError(ExecError),
}

/// Compares the accesses of an execution with those of the inferred
/// protocol, phase by phase. On typable kernels the two always coincide.
pub fn check_theorem(cfg: &RunConfig, kernel: &Kernel) -> TheoremOutcome {
    check_theorem_in(&TypeContext::for_kernel(cfg.env.names()), cfg, kernel)
}

pub fn check_theorem_in(ctx: &TypeContext, cfg: &RunConfig, kernel: &Kernel) -> TheoremOutcome {
    let protocol = match infer(ctx, kernel) {
        Ok(p) => p,
        Err(e) => return TheoremOutcome::IllTyped(e),
    };
    let exec_phases: Vec<Lambda> = match execute(cfg, &cfg.start_history(), kernel, false) {
        Ok(ex) => ex.produced().map(accesses_of_phase).collect(),
        Err(e) => return TheoremOutcome::ExecError(e),
    };
    let proto_phases = match eval_protocol_phases(cfg, &protocol) {
        Ok(p) => p,
        Err(e) => return TheoremOutcome::ExecError(e),
    };
    let count = exec_phases.len().max(proto_phases.len());
    let empty = Lambda::new();
    for phase in 0..count {
        let exec = exec_phases.get(phase).unwrap_or(&empty);
        let proto = proto_phases.get(phase).unwrap_or(&empty);
        if exec != proto {
            return TheoremOutcome::Mismatch {
                phase,
                only_exec: exec.difference(proto),
                only_proto: proto.difference(exec),
            };
        }
    }
    TheoremOutcome::Ok(exec_phases.into_iter().last().unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{Env, Phase, UninitPolicy};
    use crate::frontend::parse_kernel;
    use crate::semantics::run;
    use crate::typing::TypeErrorKind;

    const RACY: &str = "forU x in 0..M { let y = A[x] in A[x] := y + 1 }";
    const DRF: &str = "if (tid=0) { A[0] := tid } else { skip }";
    const EQ1: &str = "A[tid] := tid; let x = A[tid] in A[x] := 9";

    fn cfg(threads: Nat, m: Option<Nat>) -> RunConfig {
        let env = m.map(|m| Env::new().with("M", m)).unwrap_or_default();
        RunConfig::threads(threads, env).unwrap()
    }

    #[test]
    fn races_of_racy_example() {
        let l = crate::protocol_sem::eval_protocol(
            &cfg(2, Some(1)),
            &crate::frontend::parse_protocol("forU x in 0..M { rd[x]; wr[x] }").unwrap(),
        )
        .unwrap();
        let races: Vec<String> = races_of(&l).iter().map(ToString::to_string).collect();
        assert_eq!(races, ["0:rd[0] vs 1:wr[0]", "0:wr[0] vs 1:rd[0]", "0:wr[0] vs 1:wr[0]"]);
    }

    #[test]
    fn races_of_trivial_sets() {
        assert!(races_of(&Lambda::from_iter([AccessValue::wr(0, 0)])).is_empty());
        assert!(races_of(&Lambda::new()).is_empty());
        // Same thread never races with itself; two reads never race.
        let l = Lambda::from_iter([AccessValue::wr(0, 0), AccessValue::rd(0, 0), AccessValue::rd(1, 5), AccessValue::rd(2, 5)]);
        assert!(races_of(&l).is_empty());
    }

    #[test]
    fn race_canonical_order() {
        let r = Race::new(AccessValue::wr(3, 1), AccessValue::rd(1, 1)).unwrap();
        assert_eq!((r.first.tid, r.second.tid), (1, 3));
        assert!(Race::new(AccessValue::wr(3, 1), AccessValue::rd(1, 2)).is_none());
    }

    #[test]
    fn drf_histories() {
        assert!(is_drf_history(&History::empty()));
        let k = parse_kernel(DRF).unwrap();
        let h = run(&cfg(2, None), &History::single(Phase::new()), &k).unwrap();
        assert!(is_drf_history(&h));
        let k = parse_kernel(RACY).unwrap();
        let h = run(&cfg(2, Some(1)), &History::single(Phase::new()), &k).unwrap();
        assert!(!is_drf_history(&h));
    }

    #[test]
    fn analyze_racy_example() {
        let report = analyze(&cfg(2, Some(1)), &parse_kernel(RACY).unwrap()).unwrap();
        assert_eq!(report.verdict, Verdict::Racy);
        assert_eq!(report.alarm_class, AlarmClass::TrueAlarm);
        assert_eq!(report.typability, Typability::Typable);
    }

    #[test]
    fn analyze_drf_example() {
        let report = analyze(&cfg(8, None), &parse_kernel(DRF).unwrap()).unwrap();
        assert_eq!(report.verdict, Verdict::Drf);
        assert_eq!(report.alarm_class, AlarmClass::NotApplicable);
        assert!(report.races.is_empty());
    }

    #[test]
    fn analyze_ill_typed_example() {
        // With default-0 reads: thread 0 writes A[0], thread 1 writes A[1];
        // each reads its own write back, then writes A[tid] again.
        let report = analyze(&cfg(2, None), &parse_kernel(EQ1).unwrap()).unwrap();
        assert_eq!(report.typability, Typability::IllTyped);
        assert_eq!(report.type_error.as_ref().unwrap().kind, TypeErrorKind::DataDependentIndex);
        assert_eq!(report.verdict, Verdict::Drf);
        assert_eq!(report.alarm_class, AlarmClass::NotApplicable);

        // Reading another thread's slot defaults to 0, so both write A[0].
        let k = parse_kernel("A[tid] := tid; let x = A[tid + 1] in A[x] := 9").unwrap();
        let report = analyze(&cfg(2, None), &k).unwrap();
        assert_eq!(report.verdict, Verdict::Racy);
        assert_eq!(report.alarm_class, AlarmClass::UnverifiedAlarm);
        assert_eq!(report.races.len(), 2);
        assert_eq!(report.races.iter().map(|r| r.index).collect::<Vec<_>>(), [0, 1]);
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn theorem_examples() {
        let racy = parse_kernel(RACY).unwrap();
        match check_theorem(&cfg(2, Some(2)), &racy) {
            TheoremOutcome::Ok(l) => assert_eq!(l.len(), 8),
            other => panic!("{other:?}"),
        }
        let drf = parse_kernel(DRF).unwrap();
        assert_eq!(
            check_theorem(&cfg(2, None), &drf),
            TheoremOutcome::Ok(Lambda::from_iter([AccessValue::wr(0, 0)]))
        );
        let eq1 = parse_kernel(EQ1).unwrap();
        assert!(matches!(check_theorem(&cfg(2, None), &eq1), TheoremOutcome::IllTyped(_)));
    }

    #[test]
    fn theorem_reports_exec_errors() {
        let k = parse_kernel("let v = A[0] in A[tid] := v").unwrap();
        let c = cfg(1, None).with_uninit(UninitPolicy::Strict);
        assert!(matches!(check_theorem(&c, &k), TheoremOutcome::ExecError(_)));
    }

    #[test]
    fn theorem_with_barriers() {
        let k = parse_kernel("A[tid] := 1; sync; let v = A[1 - tid] in A[tid + 2] := v").unwrap();
        match check_theorem(&cfg(2, None), &k) {
            TheoremOutcome::Ok(last) => assert_eq!(last.to_strings(), ["0:rd[1]", "0:wr[2]", "1:rd[0]", "1:wr[3]"]),
            other => panic!("{other:?}"),
        }
        // Writes and reads of one index are separated by the barrier.
        let report = analyze(&cfg(2, None), &k).unwrap();
        assert_eq!(report.verdict, Verdict::Drf);
    }

    #[test]
    fn report_json_schema() {
        let report = analyze(&cfg(2, Some(1)), &parse_kernel(RACY).unwrap()).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["verdict"], "racy");
        assert_eq!(json["typability"], "typable");
        assert_eq!(json["alarm_class"], "true_alarm");
        assert_eq!(json["type_error"], serde_json::Value::Null);
        assert_eq!(
            json["races"][0],
            serde_json::json!({"index": 0, "a": {"tid": 0, "mode": "rd"}, "b": {"tid": 1, "mode": "wr"}})
        );
        let eq1 = analyze(&cfg(2, None), &parse_kernel(EQ1).unwrap()).unwrap();
        let json = serde_json::to_value(&eq1).unwrap();
        assert_eq!(json["typability"], "ill_typed");
        assert_eq!(json["type_error"]["kind"], "data_dependent_index");
        assert_eq!(json["type_error"]["variable"], "x");
    }
}
