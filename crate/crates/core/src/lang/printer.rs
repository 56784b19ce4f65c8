//! Canonical text rendering of programs and expressions.
//!
//! Output re-parses to a structurally equal tree. Parentheses are emitted
//! only where the grammar needs them, plus around a sequenced `then`
//! branch for readability.

use std::fmt::Write;

use super::ast::{BinOp, Expr, ExprKind, Program, ProgramKind};

/// Where a program is printed, which decides whether it needs parentheses.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    /// Delimited by keywords, `)` or end of input.
    Open,
    SeqLeft,
    ParLeft,
    ParRight,
    /// The `else` branch, which parses at `||` level.
    Else,
}

pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    program(p, Slot::Open, &mut out);
    out
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    expr(e, 0, &mut out);
    out
}

fn needs_parens(p: &Program, slot: Slot) -> bool {
    match (&p.kind, slot) {
        (_, Slot::Open) => false,
        (ProgramKind::Seq(..), _) => true,
        (ProgramKind::Par(..), Slot::ParRight) => true,
        (ProgramKind::Par(..), _) => false,
        (ProgramKind::If(..), Slot::ParLeft | Slot::ParRight) => true,
        (ProgramKind::If(..), _) => false,
        (ProgramKind::Fix(..), _) => true,
        _ => false,
    }
}

fn program(p: &Program, slot: Slot, out: &mut String) {
    if needs_parens(p, slot) {
        out.push('(');
        program(p, Slot::Open, out);
        out.push(')');
        return;
    }
    match &p.kind {
        ProgramKind::BaseProc(name) | ProgramKind::Rec(name) => out.push_str(name),
        ProgramKind::Return => out.push_str("return"),
        ProgramKind::Get => out.push_str("get"),
        ProgramKind::Pure(e) => {
            out.push_str("pure ");
            expr(e, 0, out);
        }
        ProgramKind::Put(e) => {
            out.push_str("put ");
            expr(e, 0, out);
        }
        ProgramKind::Seq(a, b) => {
            program(a, Slot::SeqLeft, out);
            out.push_str("; ");
            program(b, Slot::Open, out);
        }
        ProgramKind::Par(a, b) => {
            program(a, Slot::ParLeft, out);
            out.push_str(" || ");
            program(b, Slot::ParRight, out);
        }
        ProgramKind::If(c, t, e) => {
            out.push_str("if ");
            program(c, Slot::Open, out);
            out.push_str(" then ");
            if matches!(t.kind, ProgramKind::Seq(..)) {
                out.push('(');
                program(t, Slot::Open, out);
                out.push(')');
            } else {
                program(t, Slot::Open, out);
            }
            out.push_str(" else ");
            program(e, Slot::Else, out);
        }
        ProgramKind::Fix(name, body) => {
            let _ = write!(out, "recfun {name}: ");
            program(body, Slot::Open, out);
        }
    }
}

// Precedence levels: 0 lambda, 1 additive, 2 multiplicative, 3 postfix.
fn expr_level(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Lambda(..) => 0,
        ExprKind::Binary(op, ..) if op.is_multiplicative() => 2,
        ExprKind::Binary(..) => 1,
        ExprKind::Index(..) | ExprKind::Apply(..) => 3,
        ExprKind::Var(_) | ExprKind::Lit(_) => 4,
    }
}

fn expr(e: &Expr, min_level: u8, out: &mut String) {
    if expr_level(e) < min_level {
        out.push('(');
        expr(e, 0, out);
        out.push(')');
        return;
    }
    match &e.kind {
        ExprKind::Var(name) => out.push_str(name),
        ExprKind::Lit(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Index(target, idx) => {
            expr(target, 3, out);
            out.push('[');
            expr(idx, 0, out);
            out.push(']');
        }
        ExprKind::Apply(func, arg) => {
            expr(func, 3, out);
            out.push('(');
            expr(arg, 0, out);
            out.push(')');
        }
        ExprKind::Binary(op, lhs, rhs) => {
            let level = if op.is_multiplicative() { 2 } else { 1 };
            expr(lhs, level, out);
            let _ = write!(out, " {} ", BinOp::symbol(*op));
            expr(rhs, level + 1, out);
        }
        ExprKind::Lambda(param, body) => {
            let _ = write!(out, "lambda {param}. ");
            expr(body, 0, out);
        }
    }
}
