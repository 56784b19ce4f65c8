//! Abstract syntax for expressions and strategy programs.
//!
//! Every node carries a [`Span`]. Spans compare equal unconditionally so
//! that structural equality of trees ignores source positions; compare the
//! span fields directly when positions matter.

use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::value::Value;

/// Source location of a node.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Span {
    /// Byte offset of the first character.
    pub start: usize,
    /// Byte offset one past the last character.
    pub end: usize,
    /// 1-based line of `start`.
    pub line: u32,
    /// 1-based column (in characters) of `start`.
    pub column: u32,
}

impl Span {
    pub fn new(start: usize, end: usize, line: u32, column: u32) -> Self {
        debug_assert!(start <= end);
        Span { start, end, line, column }
    }
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl Hash for Span {
    fn hash<H: Hasher>(&self, _state: &mut H) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    /// `++`: list append (and text concatenation).
    Append,
    /// `|`: right-biased dictionary merge.
    Merge,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Append => "++",
            BinOp::Merge => "|",
        }
    }

    pub(crate) fn is_multiplicative(self) -> bool {
        matches!(self, BinOp::Mul | BinOp::Div)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Var(String),
    Lit(Value),
    Index(Box<Expr>, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Lambda(String, Arc<Expr>),
    Apply(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind) -> Self {
        Expr { kind, span: Span::default() }
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::new(ExprKind::Var(name.into()))
    }

    pub fn lit(v: impl Into<Value>) -> Self {
        Expr::new(ExprKind::Lit(v.into()))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    pub fn index(target: Expr, index: Expr) -> Self {
        Expr::new(ExprKind::Index(Box::new(target), Box::new(index)))
    }

    pub fn lambda(param: impl Into<String>, body: Expr) -> Self {
        Expr::new(ExprKind::Lambda(param.into(), Arc::new(body)))
    }

    pub fn apply(func: Expr, arg: Expr) -> Self {
        Expr::new(ExprKind::Apply(Box::new(func), Box::new(arg)))
    }

    /// Free variables, in first-occurrence order.
    pub fn free_vars(&self) -> Vec<(String, Span)> {
        fn walk(e: &Expr, bound: &mut Vec<String>, out: &mut Vec<(String, Span)>) {
            match &e.kind {
                ExprKind::Var(name) => {
                    if !bound.iter().any(|b| b == name) && !out.iter().any(|(n, _)| n == name) {
                        out.push((name.clone(), e.span));
                    }
                }
                ExprKind::Lit(_) => {}
                ExprKind::Index(a, b) | ExprKind::Binary(_, a, b) | ExprKind::Apply(a, b) => {
                    walk(a, bound, out);
                    walk(b, bound, out);
                }
                ExprKind::Lambda(param, body) => {
                    bound.push(param.clone());
                    walk(body, bound, out);
                    bound.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        match &self.kind {
            ExprKind::Var(_) | ExprKind::Lit(_) => 1,
            ExprKind::Index(a, b) | ExprKind::Binary(_, a, b) | ExprKind::Apply(a, b) => {
                1 + a.depth().max(b.depth())
            }
            ExprKind::Lambda(_, body) => 1 + body.depth(),
        }
    }
}

/// A strategy program.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub kind: ProgramKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProgramKind {
    /// A registry-resolved primitive process.
    BaseProc(String),
    /// Reference to an enclosing `recfun` binder.
    Rec(String),
    Return,
    Pure(Expr),
    Get,
    Put(Expr),
    Seq(Box<Program>, Box<Program>),
    Par(Box<Program>, Box<Program>),
    If(Box<Program>, Box<Program>, Box<Program>),
    Fix(String, Box<Program>),
}

impl Program {
    pub fn new(kind: ProgramKind) -> Self {
        Program { kind, span: Span::default() }
    }

    pub fn base(name: impl Into<String>) -> Self {
        Program::new(ProgramKind::BaseProc(name.into()))
    }

    pub fn rec(name: impl Into<String>) -> Self {
        Program::new(ProgramKind::Rec(name.into()))
    }

    pub fn ret() -> Self {
        Program::new(ProgramKind::Return)
    }

    pub fn pure(e: Expr) -> Self {
        Program::new(ProgramKind::Pure(e))
    }

    pub fn get() -> Self {
        Program::new(ProgramKind::Get)
    }

    pub fn put(e: Expr) -> Self {
        Program::new(ProgramKind::Put(e))
    }

    pub fn seq(first: Program, second: Program) -> Self {
        Program::new(ProgramKind::Seq(Box::new(first), Box::new(second)))
    }

    pub fn par(left: Program, right: Program) -> Self {
        Program::new(ProgramKind::Par(Box::new(left), Box::new(right)))
    }

    pub fn if_(cond: Program, then: Program, els: Program) -> Self {
        Program::new(ProgramKind::If(Box::new(cond), Box::new(then), Box::new(els)))
    }

    pub fn fix(name: impl Into<String>, body: Program) -> Self {
        Program::new(ProgramKind::Fix(name.into(), Box::new(body)))
    }

    /// Right-nested sequence of `items`. Panics on an empty iterator.
    pub fn seq_all(items: impl IntoIterator<Item = Program>) -> Self {
        let mut items: Vec<Program> = items.into_iter().collect();
        let mut acc = items.pop().expect("seq_all needs at least one program");
        while let Some(p) = items.pop() {
            acc = Program::seq(p, acc);
        }
        acc
    }

    pub fn depth(&self) -> usize {
        match &self.kind {
            ProgramKind::BaseProc(_)
            | ProgramKind::Rec(_)
            | ProgramKind::Return
            | ProgramKind::Get => 1,
            ProgramKind::Pure(e) | ProgramKind::Put(e) => 1 + e.depth(),
            ProgramKind::Seq(a, b) | ProgramKind::Par(a, b) => 1 + a.depth().max(b.depth()),
            ProgramKind::If(c, t, e) => 1 + c.depth().max(t.depth()).max(e.depth()),
            ProgramKind::Fix(_, body) => 1 + body.depth(),
        }
    }

    /// Visits every program node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Program)) {
        f(self);
        match &self.kind {
            ProgramKind::Seq(a, b) | ProgramKind::Par(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ProgramKind::If(c, t, e) => {
                c.walk(f);
                t.walk(f);
                e.walk(f);
            }
            ProgramKind::Fix(_, body) => body.walk(f),
            _ => {}
        }
    }

    /// Names of base processes referenced anywhere in the program, sorted and
    /// deduplicated.
    pub fn base_processes(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.walk(&mut |p| {
            if let ProgramKind::BaseProc(n) = &p.kind {
                names.push(n.clone());
            }
        });
        names.sort();
        names.dedup();
        names
    }

    pub fn count_base(&self, name: &str) -> usize {
        let mut n = 0;
        self.walk(&mut |p| {
            if matches!(&p.kind, ProgramKind::BaseProc(b) if b == name) {
                n += 1;
            }
        });
        n
    }

    pub fn has_par(&self) -> bool {
        self.any(|k| matches!(k, ProgramKind::Par(..)))
    }

    pub fn has_if(&self) -> bool {
        self.any(|k| matches!(k, ProgramKind::If(..)))
    }

    pub fn has_fix(&self) -> bool {
        self.any(|k| matches!(k, ProgramKind::Fix(..)))
    }

    fn any(&self, pred: impl Fn(&ProgramKind) -> bool) -> bool {
        let mut found = false;
        self.walk(&mut |p| found |= pred(&p.kind));
        found
    }
}
