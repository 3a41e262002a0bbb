use std::collections::BTreeMap;
use std::process::{Command, Stdio};

use mapcheck_core::ast::{Env, Nat, RunConfig};
use mapcheck_core::generator::generate_typable_kernel;
use mapcheck_core::protocol_sem::eval_protocol;
use mapcheck_core::racecheck::races_of;
use mapcheck_core::smt::{encode, solve, ParamDomain, SolveOutcome, ThreadSpace};
use mapcheck_core::typing::{infer, TypeContext};

fn solver() -> Option<String> {
    let cmd = std::env::var("MAPCHECK_SOLVER").unwrap_or_else(|_| "z3 -in".into());
    let program = cmd.split_whitespace().next()?.to_string();
    let found = Command::new(&program)
        .arg("-version")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .is_ok();
    found.then_some(cmd)
}

#[test]
fn solver_agrees_with_enumeration_and_witnesses_race() {
    let Some(cmd) = solver() else {
        eprintln!("warning: no SMT solver found, skipping");
        return;
    };
    let ctx = TypeContext::for_kernel(["M"]);
    let (mut sat, mut unsat) = (0, 0);
    for seed in 0..60u64 {
        let threads: Nat = [2, 3, 4][(seed % 3) as usize];
        let m: Nat = seed % 4;
        let protocol = infer(&ctx, &generate_typable_kernel(seed, 12 + (seed % 10) as usize)).unwrap();
        let cfg = RunConfig::threads(threads, Env::new().with("M", m)).unwrap();
        let racy = !races_of(&eval_protocol(&cfg, &protocol).unwrap()).is_empty();
        let env: BTreeMap<String, ParamDomain> = [("M".to_string(), ParamDomain::Exact(m))].into();
        let query = encode(&protocol, &ThreadSpace::Count(threads), &env).unwrap();
        assert!(query.unsupported.is_none(), "seed {seed}: {:?}", query.unsupported);
        match solve(&query, &cmd) {
            SolveOutcome::Sat(w) => {
                assert!(racy, "seed {seed}: solver found {w} but enumeration found no race\n{protocol}");
                let pair = RunConfig::new([w.i, w.j], Env::new().with("M", w.params.get("M").copied().unwrap_or(m))).unwrap();
                let races = races_of(&eval_protocol(&pair, &protocol).unwrap());
                assert!(!races.is_empty(), "seed {seed}: witness {w} does not race");
                sat += 1;
            }
            SolveOutcome::Unsat => {
                assert!(!racy, "seed {seed}: enumeration found a race the solver missed\n{protocol}");
                unsat += 1;
            }
            other => panic!("seed {seed}: {other:?}"),
        }
    }
    assert!(sat > 5 && unsat > 5, "{sat} sat / {unsat} unsat");
}
