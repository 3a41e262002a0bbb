use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use mapcheck_core::ast::{Env, RunConfig, UninitPolicy};
use mapcheck_core::frontend::{parse_kernel_with, pretty_protocol, ParseOptions, ParsedKernel};
use mapcheck_core::protocol_sem::{accesses_of_phase, Lambda};
use mapcheck_core::racecheck::{analyze_in, check_theorem_in, races_of, AlarmClass, RaceReport, TheoremOutcome, Verdict};
use mapcheck_core::semantics::{execute, ExecError};
use mapcheck_core::smt::{encode, solve, ParamDomain, SolveOutcome, ThreadSpace};
use mapcheck_core::typing::{infer, TypeContext, TypeError, Typability};
use serde::Serialize;
use serde_json::json;

use crate::args::{EnvArgs, ExecArgs, Format, ThreadArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_RACY: u8 = 1;
pub const EXIT_TYPE: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_EXEC: u8 = 4;
pub const EXIT_MISMATCH: u8 = 5;

pub const DEFAULT_SOLVER: &str = "z3 -in";

/// Buffered result of one input file.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: u8,
}

pub struct Session<'a> {
    pub path: &'a Path,
    pub format: Format,
    pub strict_paper: bool,
    out: Outcome,
}

impl<'a> Session<'a> {
    pub fn new(path: &'a Path, format: Format, strict_paper: bool) -> Self {
        Session {
            path,
            format,
            strict_paper,
            out: Outcome::default(),
        }
    }

    pub fn finish(self) -> Outcome {
        self.out
    }

    fn line(&mut self, text: impl AsRef<str>) {
        self.out.stdout.push_str(text.as_ref());
        self.out.stdout.push('\n');
    }

    fn json(&mut self, value: &impl Serialize) {
        let text = serde_json::to_string(value).expect("serializable output");
        self.line(text);
    }

    fn diag(&mut self, text: impl std::fmt::Display) {
        let _ = writeln!(self.out.stderr, "{}:{text}", self.path.display());
    }

    fn exit(&mut self, code: u8) {
        self.out.code = code;
    }

    fn load(&mut self) -> Option<ParsedKernel> {
        let source = match std::fs::read_to_string(self.path) {
            Ok(s) => s,
            Err(e) => {
                self.diag(format!(" cannot read: {e}"));
                self.exit(EXIT_PARSE);
                return None;
            }
        };
        let options = ParseOptions {
            strict_paper: self.strict_paper,
        };
        match parse_kernel_with(&source, &options) {
            Ok(parsed) => Some(parsed),
            Err(e) => {
                match self.format {
                    Format::Json => self.json(&json!({
                        "error": "parse_error",
                        "span": e.span,
                        "message": e.message,
                        "expected": e.expected,
                    })),
                    Format::Human => self.diag(&e),
                }
                self.exit(EXIT_PARSE);
                None
            }
        }
    }

    fn context(&self, env: &EnvArgs) -> TypeContext {
        TypeContext::for_kernel(env.names()).strict_paper(self.strict_paper)
    }

    fn config(&mut self, env: &EnvArgs, exec: &ExecArgs) -> Option<RunConfig> {
        let values: Env = env.set.iter().cloned().collect();
        let policy = if exec.strict_uninit || self.strict_paper {
            UninitPolicy::Strict
        } else {
            UninitPolicy::Default(exec.uninit_default.unwrap_or(0))
        };
        let built = RunConfig::new(exec.threads.thread_ids(), values).and_then(|cfg| match exec.fuel {
            Some(f) => cfg.with_fuel(f),
            None => Ok(cfg),
        });
        match built {
            Ok(cfg) => Some(cfg.with_uninit(policy).with_initial_memory(exec.init.iter().copied())),
            Err(e) => {
                self.diag(format!(" {e}"));
                self.exit(EXIT_EXEC);
                None
            }
        }
    }

    fn type_error(&mut self, e: &TypeError) {
        match self.format {
            Format::Json => self.json(&json!({"typability": Typability::IllTyped, "type_error": e})),
            Format::Human => self.diag(e),
        }
        self.exit(EXIT_TYPE);
    }

    fn exec_error(&mut self, e: &ExecError) {
        match self.format {
            Format::Json => self.json(&json!({"error": "execution_error", "detail": e})),
            Format::Human => self.diag(e),
        }
        self.exit(EXIT_EXEC);
    }

    pub fn parse(&mut self) {
        let Some(parsed) = self.load() else { return };
        match self.format {
            Format::Json => self.json(&json!({
                "kernel": parsed.kernel.to_string(),
                "renames": parsed.renames,
            })),
            Format::Human => {
                for r in &parsed.renames {
                    self.diag(format!("{r} (note)"));
                }
                self.line(parsed.kernel.to_string());
            }
        }
    }

    pub fn typecheck(&mut self, env: &EnvArgs) {
        let Some(parsed) = self.load() else { return };
        match infer(&self.context(env), &parsed.kernel) {
            Ok(p) => match self.format {
                Format::Json => self.json(&json!({
                    "typability": Typability::Typable,
                    "protocol": pretty_protocol(&p),
                    "type_error": null,
                })),
                Format::Human => self.line(pretty_protocol(&p)),
            },
            Err(e) => self.type_error(&e),
        }
    }

    pub fn check(&mut self, env: &EnvArgs, exec: &ExecArgs) {
        let Some(parsed) = self.load() else { return };
        let Some(cfg) = self.config(env, exec) else { return };
        match analyze_in(&self.context(env), &cfg, &parsed.kernel) {
            Ok(report) => {
                match self.format {
                    Format::Json => self.json(&report),
                    Format::Human => {
                        let text = render_report(self.path, &report);
                        self.out.stdout.push_str(&text);
                    }
                }
                self.exit(match report.alarm_class {
                    AlarmClass::NotApplicable => EXIT_OK,
                    AlarmClass::TrueAlarm => EXIT_RACY,
                    AlarmClass::UnverifiedAlarm => EXIT_TYPE,
                });
            }
            Err(e) => self.exec_error(&e),
        }
    }

    pub fn run(&mut self, env: &EnvArgs, exec: &ExecArgs, trace: bool) {
        let Some(parsed) = self.load() else { return };
        let Some(cfg) = self.config(env, exec) else { return };
        let ex = match execute(&cfg, &cfg.start_history(), &parsed.kernel, trace) {
            Ok(ex) => ex,
            Err(e) => return self.exec_error(&e),
        };
        let phases: Vec<_> = ex.produced().collect();
        let accesses: Vec<Lambda> = phases.iter().map(|p| accesses_of_phase(p)).collect();
        match self.format {
            Format::Json => self.json(&json!({
                "phases": phases,
                "accesses": accesses,
                "warnings": ex.warnings,
                "trace": ex.trace,
            })),
            Format::Human => {
                for (k, phase) in phases.iter().enumerate() {
                    self.line(format!("phase {k}:"));
                    for (tid, record) in phase.iter() {
                        let reads: Vec<String> = record.reads.iter().map(ToString::to_string).collect();
                        let writes: Vec<String> = record.writes.iter().map(|(i, v)| format!("A[{i}] = {v}")).collect();
                        self.line(format!(
                            "  thread {tid}: reads [{}]; writes [{}]",
                            reads.join(", "),
                            writes.join(", ")
                        ));
                    }
                    let races = races_of(&accesses[k]);
                    if !races.is_empty() {
                        let shown: Vec<String> = races.iter().map(ToString::to_string).collect();
                        self.line(format!("  races: {}", shown.join("; ")));
                    }
                }
                for w in &ex.warnings {
                    self.diag(format!(" warning: {w}"));
                }
                for step in &ex.trace {
                    self.line(step.to_string());
                }
            }
        }
    }

    pub fn verify_theorem(&mut self, env: &EnvArgs, exec: &ExecArgs) {
        let Some(parsed) = self.load() else { return };
        let Some(cfg) = self.config(env, exec) else { return };
        match check_theorem_in(&self.context(env), &cfg, &parsed.kernel) {
            TheoremOutcome::Ok(lambda) => {
                match self.format {
                    Format::Json => self.json(&json!({"outcome": "ok", "accesses": lambda})),
                    Format::Human => self.line(format!(
                        "ok: execution and protocol agree on {} access value(s) {lambda}",
                        lambda.len()
                    )),
                }
                self.exit(EXIT_OK);
            }
            TheoremOutcome::Mismatch {
                phase,
                only_exec,
                only_proto,
            } => {
                match self.format {
                    Format::Json => self.json(&json!({
                        "outcome": "mismatch",
                        "phase": phase,
                        "only_exec": only_exec,
                        "only_proto": only_proto,
                    })),
                    Format::Human => self.line(format!(
                        "mismatch in phase {phase}: only in execution {only_exec}; only in protocol {only_proto}"
                    )),
                }
                self.exit(EXIT_MISMATCH);
            }
            TheoremOutcome::IllTyped(e) => self.type_error(&e),
            TheoremOutcome::ExecError(e) => self.exec_error(&e),
        }
    }

    pub fn smt(&mut self, env: &EnvArgs, threads: &ThreadArgs, thread_param: Option<&str>, solver: Option<&str>) {
        let Some(parsed) = self.load() else { return };
        let mut ctx_names = env.names();
        ctx_names.extend(thread_param.map(str::to_string));
        let ctx = TypeContext::for_kernel(ctx_names).strict_paper(self.strict_paper);
        let protocol = match infer(&ctx, &parsed.kernel) {
            Ok(p) => p,
            Err(e) => return self.type_error(&e),
        };
        let mut domains: BTreeMap<String, ParamDomain> = BTreeMap::new();
        for (name, lo, hi) in &env.bound {
            domains.insert(name.clone(), ParamDomain::Range(*lo, *hi));
        }
        for (name, value) in &env.set {
            domains.insert(name.clone(), ParamDomain::Exact(*value));
        }
        let space = match (thread_param, &threads.tids) {
            (Some(p), _) => ThreadSpace::Param(p.to_string()),
            (None, Some(t)) => ThreadSpace::Set(t.iter().copied().collect()),
            (None, None) => ThreadSpace::Count(threads.threads),
        };
        let query = match encode(&protocol, &space, &domains) {
            Ok(q) => q,
            Err(e) => {
                match self.format {
                    Format::Json => self.json(&json!({"error": "encode_error", "message": e.to_string()})),
                    Format::Human => self.diag(format!(" {e}")),
                }
                return self.exit(EXIT_EXEC);
            }
        };
        if let Some(reason) = &query.unsupported {
            self.diag(format!(" warning: query is outside linear arithmetic: {reason}"));
        }
        let Some(solver) = solver else {
            match self.format {
                Format::Json => self.json(&query),
                Format::Human => self.out.stdout.push_str(&query.smtlib_text),
            }
            return;
        };
        let outcome = solve(&query, solver);
        match self.format {
            Format::Json => self.json(&outcome),
            Format::Human => match &outcome {
                SolveOutcome::Sat(w) => {
                    self.line("sat");
                    self.line(format!("witness: {w}"));
                }
                SolveOutcome::Unsat => self.line("unsat"),
                SolveOutcome::Unknown(why) => self.line(format!("unknown: {why}")),
                SolveOutcome::SolverError(why) => self.diag(format!(" solver error: {why}")),
            },
        }
        self.exit(match outcome {
            SolveOutcome::Sat(_) => EXIT_RACY,
            SolveOutcome::Unsat => EXIT_OK,
            SolveOutcome::Unknown(_) | SolveOutcome::SolverError(_) => EXIT_EXEC,
        });
    }
}

pub fn render_report(path: &Path, report: &RaceReport) -> String {
    let mut out = String::new();
    let verdict = match report.verdict {
        Verdict::Drf => "drf",
        Verdict::Racy => "racy",
    };
    let alarm = match report.alarm_class {
        AlarmClass::TrueAlarm => ", true_alarm",
        AlarmClass::UnverifiedAlarm => ", unverified_alarm",
        AlarmClass::NotApplicable => "",
    };
    let _ = writeln!(out, "{}: {verdict} ({}{alarm})", path.display(), report.typability.as_str());
    for race in &report.races {
        let _ = writeln!(out, "  race on A[{}]: {race}", race.index);
    }
    if let Some(e) = &report.type_error {
        let _ = writeln!(out, "  type error: {e}");
    }
    for w in &report.warnings {
        let _ = writeln!(out, "  warning: {w}");
    }
    out
}
