#![allow(dead_code)]

use mapcheck_core::ast::{BoolExpr, Conn, Kernel, Nat, NumExpr, NumOp, Rel};
use mapcheck_core::frontend::alpha_rename;
use proptest::prelude::*;

pub const OPS: [NumOp; 5] = [NumOp::Add, NumOp::Monus, NumOp::Mul, NumOp::Div, NumOp::Mod];
pub const RELS: [Rel; 6] = [Rel::Eq, Rel::Ne, Rel::Lt, Rel::Le, Rel::Gt, Rel::Ge];

pub fn num_expr(vars: &'static [&'static str]) -> impl Strategy<Value = NumExpr> {
    let leaf = prop_oneof![
        3 => Just(NumExpr::Tid),
        3 => (0..20u64).prop_map(NumExpr::lit),
        1 => prop::sample::select(vars).prop_map(NumExpr::var),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        (prop::sample::select(&OPS[..]), inner.clone(), inner).prop_map(|(op, l, r)| NumExpr::bin(op, l, r))
    })
}

pub fn bool_expr(vars: &'static [&'static str]) -> impl Strategy<Value = BoolExpr> {
    let leaf = prop_oneof![
        1 => Just(BoolExpr::True),
        1 => Just(BoolExpr::False),
        4 => (prop::sample::select(&RELS[..]), num_expr(vars), num_expr(vars)).prop_map(|(r, a, b)| BoolExpr::cmp(r, a, b)),
    ];
    leaf.prop_recursive(2, 8, 2, |inner| {
        (any::<bool>(), inner.clone(), inner).prop_map(|(and, l, r)| {
            BoolExpr::conn(if and { Conn::And } else { Conn::Or }, l, r)
        })
    })
}

/// Arbitrary kernels over a fixed variable pool; binders are drawn from the
/// same pool, so kernels may or may not be typable. Half of them get
/// pairwise-distinct binders.
pub fn kernel(vars: &'static [&'static str]) -> impl Strategy<Value = Kernel> {
    (raw_kernel(vars), any::<bool>()).prop_map(|(k, rename)| if rename { alpha_rename(&k).0 } else { k })
}

fn raw_kernel(vars: &'static [&'static str]) -> impl Strategy<Value = Kernel> {
    let leaf = prop_oneof![
        1 => Just(Kernel::skip()),
        4 => (num_expr(vars), num_expr(vars)).prop_map(|(i, p)| Kernel::write(i, p)),
    ];
    leaf.prop_recursive(4, 24, 3, move |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Kernel::seq(a, b)),
            (prop::sample::select(vars), num_expr(vars), inner.clone()).prop_map(|(x, i, b)| Kernel::read(x, i, b)),
            (bool_expr(vars), inner.clone(), inner.clone()).prop_map(|(c, a, b)| Kernel::if_else(c, a, b)),
            (prop::sample::select(vars), num_expr(vars), num_expr(vars), inner)
                .prop_map(|(x, lo, hi, b)| Kernel::for_loop(x, lo, hi, b)),
        ]
    })
}

/// Reference arithmetic on closed expressions, written independently of the
/// library's evaluator. `None` on division by zero or overflow.
pub fn eval_closed(e: &NumExpr, tid: Nat) -> Option<Nat> {
    match e {
        NumExpr::Tid => Some(tid),
        NumExpr::Lit(n) => Some(*n),
        NumExpr::Var(_) => None,
        NumExpr::Bin(op, l, r) => {
            let (a, b) = (eval_closed(l, tid)?, eval_closed(r, tid)?);
            match op {
                NumOp::Add => a.checked_add(b),
                NumOp::Monus => Some(a.saturating_sub(b)),
                NumOp::Mul => a.checked_mul(b),
                NumOp::Div => a.checked_div(b),
                NumOp::Mod => a.checked_rem(b),
            }
        }
    }
}

pub fn holds_closed(c: &BoolExpr, tid: Nat) -> Option<bool> {
    match c {
        BoolExpr::True => Some(true),
        BoolExpr::False => Some(false),
        BoolExpr::Cmp(rel, l, r) => {
            let (a, b) = (eval_closed(l, tid)?, eval_closed(r, tid)?);
            Some(match rel {
                Rel::Eq => a == b,
                Rel::Ne => a != b,
                Rel::Lt => a < b,
                Rel::Le => a <= b,
                Rel::Gt => a > b,
                Rel::Ge => a >= b,
            })
        }
        BoolExpr::Conn(conn, l, r) => {
            let (a, b) = (holds_closed(l, tid)?, holds_closed(r, tid)?);
            Some(if *conn == Conn::And { a && b } else { a || b })
        }
    }
}
