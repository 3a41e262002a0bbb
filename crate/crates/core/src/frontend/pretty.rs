//! Canonical single-line concrete syntax.

use std::fmt::{self, Write as _};

use crate::ast::{BoolExpr, Kernel, KernelKind, NumExpr, Protocol, ProtocolKind};

pub fn num(e: &NumExpr) -> String {
    let mut out = String::new();
    write_num(&mut out, e);
    out
}

fn write_num(out: &mut String, e: &NumExpr) {
    match e {
        NumExpr::Var(name) => out.push_str(name),
        NumExpr::Tid => out.push_str("tid"),
        NumExpr::Lit(n) => {
            let _ = write!(out, "{n}");
        }
        NumExpr::Bin(op, lhs, rhs) => {
            let paren_l = matches!(&**lhs, NumExpr::Bin(l, ..) if l.precedence() < op.precedence());
            // Operators are left-associative, so an equal-precedence right
            // operand needs parentheses.
            let paren_r = matches!(&**rhs, NumExpr::Bin(r, ..) if r.precedence() <= op.precedence());
            write_wrapped(out, lhs, paren_l);
            let _ = write!(out, " {} ", op.symbol());
            write_wrapped(out, rhs, paren_r);
        }
    }
}

fn write_wrapped(out: &mut String, e: &NumExpr, paren: bool) {
    if paren {
        out.push('(');
        write_num(out, e);
        out.push(')');
    } else {
        write_num(out, e);
    }
}

pub fn boolean(c: &BoolExpr) -> String {
    let mut out = String::new();
    write_bool(&mut out, c);
    out
}

fn write_bool(out: &mut String, c: &BoolExpr) {
    match c {
        BoolExpr::True => out.push_str("true"),
        BoolExpr::False => out.push_str("false"),
        BoolExpr::Cmp(rel, lhs, rhs) => {
            write_num(out, lhs);
            // `tid=0`, but `x + 1 < M`.
            if matches!(lhs, NumExpr::Bin(..)) || matches!(rhs, NumExpr::Bin(..)) {
                let _ = write!(out, " {} ", rel.symbol());
            } else {
                out.push_str(rel.symbol());
            }
            write_num(out, rhs);
        }
        BoolExpr::Conn(conn, lhs, rhs) => {
            let paren_l = matches!(&**lhs, BoolExpr::Conn(l, ..) if l.precedence() < conn.precedence());
            let paren_r = matches!(&**rhs, BoolExpr::Conn(r, ..) if r.precedence() <= conn.precedence());
            write_bool_wrapped(out, lhs, paren_l);
            let _ = write!(out, " {} ", conn.symbol());
            write_bool_wrapped(out, rhs, paren_r);
        }
    }
}

fn write_bool_wrapped(out: &mut String, c: &BoolExpr, paren: bool) {
    if paren {
        out.push('(');
        write_bool(out, c);
        out.push(')');
    } else {
        write_bool(out, c);
    }
}

pub fn kernel(k: &Kernel) -> String {
    let mut out = String::new();
    write_kernel(&mut out, k);
    out
}

fn write_kernel(out: &mut String, k: &Kernel) {
    match &k.kind {
        KernelKind::Skip => out.push_str("skip"),
        KernelKind::Sync => out.push_str("sync"),
        KernelKind::Write { index, payload } => {
            let _ = write!(out, "A[{}] := {}", num(index), num(payload));
        }
        KernelKind::Read { binder, index, body } => {
            let _ = write!(out, "let {binder} = A[{}] in ", num(index));
            write_kernel(out, body);
        }
        KernelKind::Seq(first, second) => {
            // A leading `let` would swallow the rest of the sequence.
            if matches!(first.kind, KernelKind::Seq(..) | KernelKind::Read { .. }) {
                out.push_str("{ ");
                write_kernel(out, first);
                out.push_str(" }");
            } else {
                write_kernel(out, first);
            }
            out.push_str("; ");
            write_kernel(out, second);
        }
        KernelKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            let _ = write!(out, "if ({}) {{ ", boolean(cond));
            write_kernel(out, then_branch);
            out.push_str(" } else { ");
            write_kernel(out, else_branch);
            out.push_str(" }");
        }
        KernelKind::For { binder, lo, hi, body } => {
            let _ = write!(out, "forU {binder} in {}..{} {{ ", num(lo), num(hi));
            write_kernel(out, body);
            out.push_str(" }");
        }
    }
}

pub fn protocol(p: &Protocol) -> String {
    let mut out = String::new();
    write_protocol(&mut out, p);
    out
}

fn write_protocol(out: &mut String, p: &Protocol) {
    match &p.kind {
        ProtocolKind::Skip => out.push_str("skip"),
        ProtocolKind::Sync => out.push_str("sync"),
        ProtocolKind::Access { mode, index } => {
            let _ = write!(out, "{mode}[{}]", num(index));
        }
        ProtocolKind::Seq(first, second) | ProtocolKind::SSeq(first, second) => {
            if matches!(first.kind, ProtocolKind::Seq(..) | ProtocolKind::SSeq(..)) {
                out.push_str("{ ");
                write_protocol(out, first);
                out.push_str(" }");
            } else {
                write_protocol(out, first);
            }
            out.push_str("; ");
            write_protocol(out, second);
        }
        ProtocolKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            let _ = write!(out, "if ({}) {{ ", boolean(cond));
            write_protocol(out, then_branch);
            out.push_str(" } else { ");
            write_protocol(out, else_branch);
            out.push_str(" }");
        }
        ProtocolKind::For { binder, lo, hi, body } | ProtocolKind::SFor { binder, lo, hi, body } => {
            let kw = if matches!(p.kind, ProtocolKind::For { .. }) {
                "forU"
            } else {
                "forS"
            };
            let _ = write!(out, "{kw} {binder} in {}..{} {{ ", num(lo), num(hi));
            write_protocol(out, body);
            out.push_str(" }");
        }
    }
}

impl fmt::Display for NumExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&num(self))
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&boolean(self))
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&kernel(self))
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&protocol(self))
    }
}
