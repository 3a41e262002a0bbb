//! Seeded random generation of typable kernels.
//!
//! Generated kernels only index memory with `tid`, loop variables,
//! parameters and literals; read binders flow into payloads only. Loops nest
//! at most two deep and their bounds stay small, so execution with a loop
//! fuel of 256 and parameters up to 3 never runs dry.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ast::{BoolExpr, Conn, Kernel, NumExpr, NumOp, Rel};

pub const MAX_LOOP_DEPTH: usize = 2;

#[derive(Clone, Debug)]
pub struct GenOptions {
    /// Parameters that may appear in expressions.
    pub params: Vec<String>,
    /// Emit `sync` outside conditionals and loops.
    pub allow_sync: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            params: vec!["M".to_string()],
            allow_sync: false,
        }
    }
}

/// A typable kernel with at most `size_budget` nodes. A budget of 1 yields
/// `skip`.
pub fn generate_typable_kernel(seed: u64, size_budget: usize) -> Kernel {
    generate_kernel(seed, size_budget, &GenOptions::default())
}

pub fn generate_kernel(seed: u64, size_budget: usize, options: &GenOptions) -> Kernel {
    if size_budget <= 1 {
        return Kernel::skip();
    }
    let mut g = Generator {
        rng: ChaCha8Rng::seed_from_u64(seed),
        options,
        loop_vars: Vec::new(),
        data_vars: Vec::new(),
        fresh: 0,
        guarded: false,
    };
    g.kernel(size_budget)
}

struct Generator<'a> {
    rng: ChaCha8Rng,
    options: &'a GenOptions,
    loop_vars: Vec<String>,
    data_vars: Vec<String>,
    fresh: usize,
    guarded: bool,
}

impl Generator<'_> {
    fn fresh(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{prefix}{}", self.fresh)
    }

    fn kernel(&mut self, budget: usize) -> Kernel {
        if budget <= 1 {
            return self.leaf();
        }
        let mut choices = vec![1];
        if budget >= 3 {
            choices.extend([0, 0, 0, 2, 2]);
        }
        if self.loop_vars.len() < MAX_LOOP_DEPTH {
            choices.extend([3, 3]);
        }
        match *choices.choose(&mut self.rng).unwrap() {
            0 => {
                let left = self.rng.gen_range(1..budget - 1);
                let first = self.kernel(left);
                let second = self.kernel(budget - 1 - left);
                Kernel::seq(first, second)
            }
            1 => {
                let binder = self.fresh("d");
                let index = self.index();
                self.data_vars.push(binder.clone());
                let body = self.kernel(budget - 1);
                self.data_vars.pop();
                Kernel::read(binder, index, body)
            }
            2 => {
                let cond = self.cond();
                let left = self.rng.gen_range(1..budget - 1);
                let saved = std::mem::replace(&mut self.guarded, true);
                let then_branch = self.kernel(left);
                let else_branch = self.kernel(budget - 1 - left);
                self.guarded = saved;
                Kernel::if_else(cond, then_branch, else_branch)
            }
            _ => {
                let binder = self.fresh("i");
                let lo = self.lower_bound();
                let hi = self.upper_bound();
                let saved = std::mem::replace(&mut self.guarded, true);
                self.loop_vars.push(binder.clone());
                let body = self.kernel(budget - 1);
                self.loop_vars.pop();
                self.guarded = saved;
                Kernel::for_loop(binder, lo, hi, body)
            }
        }
    }

    fn leaf(&mut self) -> Kernel {
        let roll = self.rng.gen_range(0..10);
        if roll == 0 {
            Kernel::skip()
        } else if roll == 1 && self.options.allow_sync && !self.guarded {
            Kernel::sync()
        } else {
            let index = self.index();
            let payload = self.payload();
            Kernel::write(index, payload)
        }
    }

    fn atom(&mut self) -> NumExpr {
        let mut atoms = vec![NumExpr::Tid, NumExpr::lit(self.rng.gen_range(0..4))];
        atoms.extend(self.loop_vars.iter().map(NumExpr::var));
        atoms.extend(self.options.params.iter().map(NumExpr::var));
        atoms.swap_remove(self.rng.gen_range(0..atoms.len()))
    }

    fn index(&mut self) -> NumExpr {
        self.index_at(2)
    }

    fn index_at(&mut self, depth: usize) -> NumExpr {
        if depth == 0 || self.rng.gen_bool(0.55) {
            return self.atom();
        }
        let lhs = self.index_at(depth - 1);
        match self.rng.gen_range(0..5) {
            0 => NumExpr::add(lhs, self.index_at(depth - 1)),
            1 => NumExpr::bin(NumOp::Monus, lhs, self.index_at(depth - 1)),
            2 => NumExpr::bin(NumOp::Mul, NumExpr::lit(self.rng.gen_range(0..4)), lhs),
            3 => NumExpr::bin(NumOp::Div, lhs, NumExpr::lit(self.rng.gen_range(1..4))),
            _ => NumExpr::bin(NumOp::Mod, lhs, NumExpr::lit(self.rng.gen_range(1..4))),
        }
    }

    fn payload(&mut self) -> NumExpr {
        let base = match self.data_vars.choose(&mut self.rng) {
            Some(d) if self.rng.gen_bool(0.6) => NumExpr::var(d.clone()),
            _ => self.atom(),
        };
        if self.rng.gen_bool(0.5) {
            NumExpr::add(base, NumExpr::lit(self.rng.gen_range(0..10)))
        } else {
            base
        }
    }

    fn cmp(&mut self) -> BoolExpr {
        let rel = *[Rel::Eq, Rel::Ne, Rel::Lt, Rel::Le, Rel::Gt, Rel::Ge].choose(&mut self.rng).unwrap();
        BoolExpr::cmp(rel, self.index_at(1), self.index_at(1))
    }

    fn cond(&mut self) -> BoolExpr {
        match self.rng.gen_range(0..10) {
            0 => BoolExpr::True,
            1 => BoolExpr::False,
            2 | 3 => {
                let conn = if self.rng.gen() { Conn::And } else { Conn::Or };
                BoolExpr::conn(conn, self.cmp(), self.cmp())
            }
            _ => self.cmp(),
        }
    }

    fn lower_bound(&mut self) -> NumExpr {
        match self.rng.gen_range(0..4) {
            0 => NumExpr::bin(NumOp::Mod, NumExpr::Tid, NumExpr::lit(2)),
            1 if !self.loop_vars.is_empty() => NumExpr::var(self.loop_vars[0].clone()),
            _ => NumExpr::lit(self.rng.gen_range(0..3)),
        }
    }

    /// Evaluates to at most 4 whenever `tid` and every parameter are at most 3.
    fn upper_bound(&mut self) -> NumExpr {
        let param = self.options.params.choose(&mut self.rng).cloned();
        match (self.rng.gen_range(0..5), param) {
            (0, Some(p)) => NumExpr::var(p),
            (1, Some(p)) => NumExpr::add(NumExpr::var(p), NumExpr::lit(1)),
            (2, _) => NumExpr::add(NumExpr::bin(NumOp::Mod, NumExpr::Tid, NumExpr::lit(4)), NumExpr::lit(1)),
            _ => NumExpr::lit(self.rng.gen_range(0..5)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typing::{infer, TypeContext};

    #[test]
    fn deterministic_per_seed() {
        for seed in 0..50 {
            assert_eq!(generate_typable_kernel(seed, 20), generate_typable_kernel(seed, 20));
        }
        let distinct: std::collections::HashSet<String> =
            (0..50).map(|s| generate_typable_kernel(s, 20).to_string()).collect();
        assert!(distinct.len() > 40);
    }

    #[test]
    fn unit_budget_is_skip() {
        assert_eq!(generate_typable_kernel(0, 1), Kernel::skip());
        assert_eq!(generate_typable_kernel(7, 0), Kernel::skip());
    }

    #[test]
    fn respects_budget_and_types() {
        let ctx = TypeContext::for_kernel(["M"]);
        for seed in 0..500 {
            let budget = (seed % 30 + 1) as usize;
            let k = generate_typable_kernel(seed, budget);
            assert!(k.size() <= budget, "seed {seed}: size {} > {budget}", k.size());
            infer(&ctx, &k).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{k}"));
            assert!(!k.contains_sync());
        }
    }

    #[test]
    fn sync_only_unguarded() {
        let options = GenOptions {
            allow_sync: true,
            ..GenOptions::default()
        };
        let ctx = TypeContext::for_kernel(["M"]);
        let mut saw_sync = false;
        for seed in 0..300 {
            let k = generate_kernel(seed, 25, &options);
            saw_sync |= k.contains_sync();
            infer(&ctx, &k).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{k}"));
        }
        assert!(saw_sync);
    }
}
