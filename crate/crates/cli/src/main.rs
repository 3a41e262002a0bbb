//! `map-check`: parse, type, run and race-check kernels.
//!
//! Exit codes: 0 drf/ok, 1 racy, 2 type error, 3 parse error, 4 execution
//! error, 5 theorem mismatch, 64 bad command line. With several files the
//! largest code wins.

mod args;
mod commands;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::{EnvArgs, ExecArgs, Inputs, ThreadArgs};
use commands::{Outcome, Session, DEFAULT_SOLVER};

#[derive(Parser, Debug)]
#[command(name = "map-check", version, about = "Memory access protocol inference and data-race checking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the canonical form of each kernel.
    Parse {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Infer the memory access protocol.
    Typecheck {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        env: EnvArgs,
    },
    /// Report data races, classifying alarms by typability.
    Check {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Execute the kernel and print the phases it produces.
    Run {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        exec: ExecArgs,
        /// Print every rule application.
        #[arg(long)]
        trace: bool,
    },
    /// Compare the accesses of an execution with those of the inferred protocol.
    VerifyTheorem {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Emit an SMT-LIB2 race query, or solve it with `--solve`.
    Smt {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        threads: ThreadArgs,
        /// Range threads over {0, …, P-1} for a bounded parameter P.
        #[arg(long, value_name = "P", conflicts_with = "tids")]
        thread_param: Option<String>,
        /// Run the solver and report its verdict.
        #[arg(long)]
        solve: bool,
        /// Solver command reading SMT-LIB2 on stdin (default: $MAPCHECK_SOLVER, then `z3 -in`).
        #[arg(long, value_name = "CMD")]
        solver: Option<String>,
    },
}

impl Command {
    fn inputs(&self) -> &Inputs {
        match self {
            Command::Parse { inputs }
            | Command::Typecheck { inputs, .. }
            | Command::Check { inputs, .. }
            | Command::Run { inputs, .. }
            | Command::VerifyTheorem { inputs, .. }
            | Command::Smt { inputs, .. } => inputs,
        }
    }

    fn process(&self, path: &Path) -> Outcome {
        let inputs = self.inputs();
        let mut s = Session::new(path, inputs.format, inputs.strict_paper);
        match self {
            Command::Parse { .. } => s.parse(),
            Command::Typecheck { env, .. } => s.typecheck(env),
            Command::Check { env, exec, .. } => s.check(env, exec),
            Command::Run { env, exec, trace, .. } => s.run(env, exec, *trace),
            Command::VerifyTheorem { env, exec, .. } => s.verify_theorem(env, exec),
            Command::Smt {
                env,
                threads,
                thread_param,
                solve,
                solver,
                ..
            } => {
                let solver = solve.then(|| {
                    solver
                        .clone()
                        .or_else(|| std::env::var("MAPCHECK_SOLVER").ok())
                        .unwrap_or_else(|| DEFAULT_SOLVER.to_string())
                });
                s.smt(env, threads, thread_param.as_deref(), solver.as_deref())
            }
        }
        s.finish()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 64 } else { 0 });
        }
    };
    let files = &cli.command.inputs().files;
    let outcomes: Vec<Outcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = files.iter().map(|f| scope.spawn(|| cli.command.process(f))).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let (mut stdout, mut stderr) = (std::io::stdout().lock(), std::io::stderr().lock());
    let mut code = 0;
    for o in outcomes {
        let _ = stdout.write_all(o.stdout.as_bytes());
        let _ = stdout.flush();
        let _ = stderr.write_all(o.stderr.as_bytes());
        code = code.max(o.code);
    }
    ExitCode::from(code)
}
