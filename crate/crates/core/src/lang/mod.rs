//! The strategy language: values, expressions and programs, with a parser,
//! a canonical printer and a static validator.

pub mod ast;
pub mod parser;
pub mod printer;
pub mod validate;
pub mod value;

pub use ast::{BinOp, Expr, ExprKind, Program, ProgramKind, Span};
pub use parser::{parse_expr, parse_strategy, parse_value, ParseError};
pub use printer::{pretty_print, print_expr};
pub use validate::{validate, Diagnostic, DiagnosticKind, INPUT_VAR};
pub use value::Value;
