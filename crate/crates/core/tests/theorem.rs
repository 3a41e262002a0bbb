use mapcheck_core::ast::{Env, Nat, RunConfig};
use mapcheck_core::generator::{generate_kernel, generate_typable_kernel, GenOptions};
use mapcheck_core::protocol_sem::{accesses_of_phase, eval_protocol};
use mapcheck_core::racecheck::{analyze, check_theorem, races_of, TheoremOutcome, Verdict};
use mapcheck_core::semantics::execute;
use mapcheck_core::typing::{infer, TypeContext};
use proptest::prelude::*;

fn cfg(threads: Nat, m: Nat) -> RunConfig {
    RunConfig::threads(threads, Env::new().with("M", m)).unwrap().with_fuel(256).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn execution_matches_protocol(seed in any::<u64>(), budget in 1usize..=30, threads in prop::sample::select(vec![1u64, 2, 4]), m in prop::sample::select(vec![0u64, 1, 3])) {
        let k = generate_typable_kernel(seed, budget);
        let c = cfg(threads, m);
        match check_theorem(&c, &k) {
            TheoremOutcome::Ok(_) => {}
            other => prop_assert!(false, "{k}\n{other:?}"),
        }
    }

    #[test]
    fn race_verdicts_agree(seed in any::<u64>(), budget in 1usize..=30, threads in prop::sample::select(vec![2u64, 4]), m in prop::sample::select(vec![0u64, 1, 3])) {
        let k = generate_typable_kernel(seed, budget);
        let c = cfg(threads, m);
        let protocol = infer(&TypeContext::for_kernel(["M"]), &k).unwrap();
        let proto_racy = !races_of(&eval_protocol(&c, &protocol).unwrap()).is_empty();
        let ex = execute(&c, &c.start_history(), &k, false).unwrap();
        let exec_racy = ex.produced().any(|p| !races_of(&accesses_of_phase(p)).is_empty());
        prop_assert_eq!(proto_racy, exec_racy);
        let report = analyze(&c, &k).unwrap();
        prop_assert_eq!(report.verdict == Verdict::Racy, proto_racy);
    }

    #[test]
    fn barriers_preserve_agreement_per_phase(seed in any::<u64>(), budget in 1usize..=30, threads in prop::sample::select(vec![1u64, 2, 4]), m in prop::sample::select(vec![0u64, 1, 3])) {
        let options = GenOptions { allow_sync: true, ..GenOptions::default() };
        let k = generate_kernel(seed, budget, &options);
        match check_theorem(&cfg(threads, m), &k) {
            TheoremOutcome::Ok(_) => {}
            other => prop_assert!(false, "{k}\n{other:?}"),
        }
    }

    #[test]
    fn initial_memory_does_not_change_accesses(seed in any::<u64>(), budget in 1usize..=30, init in prop::collection::vec((0u64..8, 0u64..100), 0..5)) {
        let k = generate_typable_kernel(seed, budget);
        let plain = check_theorem(&cfg(2, 1), &k);
        let seeded = check_theorem(&cfg(2, 1).with_initial_memory(init), &k);
        prop_assert_eq!(plain, seeded);
    }
}
