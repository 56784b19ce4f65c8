//! Static checks run before interpretation.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::ast::{Program, ProgramKind, Span};

/// The variable bound to a process's input inside `pure` and `put`
/// expressions.
pub const INPUT_VAR: &str = "input";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    UnknownProcess,
    UnboundRecursion,
    UnboundVariable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
    #[serde(skip)]
    pub span: Span,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.span.line, self.span.column, self.message)
    }
}

/// Checks that every base process resolves, every recursive reference is
/// bound by an enclosing `recfun`, and every expression is closed apart
/// from [`INPUT_VAR`]. An empty result means the program is valid.
pub fn validate(p: &Program, registry: &BTreeSet<String>) -> Vec<Diagnostic> {
    let mut all_fix_names = BTreeSet::new();
    p.walk(&mut |node| {
        if let ProgramKind::Fix(name, _) = &node.kind {
            all_fix_names.insert(name.clone());
        }
    });
    let mut v = Validator { registry, all_fix_names, scope: Vec::new(), out: Vec::new() };
    v.program(p);
    v.out
}

struct Validator<'a> {
    registry: &'a BTreeSet<String>,
    all_fix_names: BTreeSet<String>,
    scope: Vec<String>,
    out: Vec<Diagnostic>,
}

impl Validator<'_> {
    fn push(&mut self, kind: DiagnosticKind, message: String, span: Span) {
        self.out.push(Diagnostic { kind, message, span });
    }

    fn program(&mut self, p: &Program) {
        match &p.kind {
            ProgramKind::BaseProc(name) => {
                if self.scope.iter().any(|n| n == name) || self.registry.contains(name) {
                    return;
                }
                if self.all_fix_names.contains(name) {
                    self.push(
                        DiagnosticKind::UnboundRecursion,
                        format!("unbound recursion variable `{name}`: no enclosing recfun binds it"),
                        p.span,
                    );
                } else {
                    self.push(
                        DiagnosticKind::UnknownProcess,
                        format!("unresolved base process `{name}`"),
                        p.span,
                    );
                }
            }
            ProgramKind::Rec(name) => {
                if !self.scope.iter().any(|n| n == name) {
                    self.push(
                        DiagnosticKind::UnboundRecursion,
                        format!("unbound recursion variable `{name}`: no enclosing recfun binds it"),
                        p.span,
                    );
                }
            }
            ProgramKind::Return | ProgramKind::Get => {}
            ProgramKind::Pure(e) | ProgramKind::Put(e) => {
                for (name, span) in e.free_vars() {
                    if name != INPUT_VAR {
                        self.push(
                            DiagnosticKind::UnboundVariable,
                            format!("unbound variable `{name}`"),
                            span,
                        );
                    }
                }
            }
            ProgramKind::Seq(a, b) | ProgramKind::Par(a, b) => {
                self.program(a);
                self.program(b);
            }
            ProgramKind::If(c, t, e) => {
                self.program(c);
                self.program(t);
                self.program(e);
            }
            ProgramKind::Fix(name, body) => {
                self.scope.push(name.clone());
                self.program(body);
                self.scope.pop();
            }
        }
    }
}
