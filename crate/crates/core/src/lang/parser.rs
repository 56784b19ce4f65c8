//! Recursive-descent parser for strategy programs and expressions.
//!
//! Program syntax, loosest to tightest:
//!
//! ```text
//! seq     := par (";" seq)?                       right-associative
//! par     := primary ("||" primary)*              left-associative
//! primary := "return" | "get" | "pure" expr | "put" expr
//!          | "if" seq "then" seq "else" par
//!          | "recfun" NAME ":" seq
//!          | "(" seq ")" | NAME
//! ```
//!
//! Expressions use `lambda x. e`, then `+ - ++ |`, then `* /`, then
//! postfix indexing `e[i]` and application `f(x)`. Process names may
//! contain inner hyphens (`Eval-Opt`); expression variables may not.
//! `#` starts a comment that runs to the end of the line.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::ast::{BinOp, Expr, ExprKind, Program, ProgramKind, Span};
use super::value::Value;

/// Nesting limit for both programs and expressions. Keeps recursive passes
/// over the tree well inside a thread's stack.
pub const MAX_NESTING: usize = 200;

pub(crate) const KEYWORDS: &[&str] = &[
    "return", "pure", "get", "put", "if", "then", "else", "recfun", "lambda", "true", "false",
    "null",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub message: String,
    pub span: Span,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.span.line, self.span.column, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

type PResult<T> = Result<T, ParseError>;

/// Parses a complete strategy program.
pub fn parse_strategy(text: &str) -> PResult<Program> {
    let mut p = Parser::new(text);
    let prog = p.seq()?;
    p.expect_eof()?;
    Ok(prog)
}

/// Parses a standalone expression.
pub fn parse_expr(text: &str) -> PResult<Expr> {
    let mut p = Parser::new(text);
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses a value literal (the subset of expression syntax without
/// variables or operators).
pub fn parse_value(text: &str) -> PResult<Value> {
    let mut p = Parser::new(text);
    p.skip_ws();
    let v = p.literal()?;
    p.expect_eof()?;
    Ok(v)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    line_starts: Vec<usize>,
    depth: usize,
    /// Enclosing `recfun` binders, innermost last.
    fix_scope: Vec<String>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        let mut line_starts = vec![0];
        line_starts.extend(src.match_indices('\n').map(|(i, _)| i + 1));
        Parser { src, pos: 0, line_starts, depth: 0, fix_scope: Vec::new() }
    }

    fn span_from(&self, start: usize) -> Span {
        let (line, column) = self.line_col(start);
        Span::new(start, self.pos.max(start), line, column)
    }

    fn line_col(&self, offset: usize) -> (u32, u32) {
        let line_idx = match self.line_starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let col = self.src[self.line_starts[line_idx]..offset].chars().count();
        (line_idx as u32 + 1, col as u32 + 1)
    }

    fn error<T>(&self, message: impl Into<String>, expected: &[&str]) -> PResult<T> {
        let end = self.pos + self.peek().map_or(0, char::len_utf8);
        let (line, column) = self.line_col(self.pos);
        Err(ParseError {
            message: message.into(),
            span: Span::new(self.pos, end, line, column),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
    }

    /// Consumes `tok` (after whitespace) if present.
    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> PResult<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            let found = self.describe_next();
            self.error(format!("unexpected {found}"), &[&format!("'{tok}'")])
        }
    }

    fn expect_eof(&mut self) -> PResult<()> {
        self.skip_ws();
        if self.pos == self.src.len() {
            Ok(())
        } else {
            let found = self.describe_next();
            self.error(format!("unexpected {found}"), &["end of input"])
        }
    }

    fn describe_next(&self) -> String {
        match self.peek() {
            None => "end of input".to_owned(),
            Some(c) if is_ident_start(c) => {
                let word: String = self.rest().chars().take_while(|&c| is_ident_char(c)).collect();
                format!("'{word}'")
            }
            Some(c) => format!("'{c}'"),
        }
    }

    /// Peeks a keyword with a word boundary after it.
    fn at_keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let rest = self.rest();
        rest.starts_with(kw) && !rest[kw.len()..].chars().next().is_some_and(is_ident_char)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            let found = self.describe_next();
            self.error(format!("unexpected {found}"), &[&format!("'{kw}'")])
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return self.error(format!("nesting deeper than {MAX_NESTING} levels"), &[]);
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    /// Identifier for process names: inner hyphens allowed.
    fn process_name(&mut self) -> Option<String> {
        self.skip_ws();
        let rest = self.rest();
        let mut chars = rest.char_indices().peekable();
        match chars.peek() {
            Some(&(_, c)) if is_ident_start(c) => {}
            _ => return None,
        }
        let mut end = 0;
        while let Some(&(i, c)) = chars.peek() {
            if is_ident_char(c) {
                end = i + c.len_utf8();
                chars.next();
            } else if c == '-' {
                let mut look = chars.clone();
                look.next();
                match look.peek() {
                    Some(&(_, n)) if is_ident_char(n) => {
                        chars.next();
                    }
                    _ => break,
                }
            } else {
                break;
            }
        }
        let word = &rest[..end];
        if KEYWORDS.contains(&word) {
            return None;
        }
        self.pos += end;
        Some(word.to_owned())
    }

    fn var_name(&mut self) -> Option<String> {
        self.skip_ws();
        let rest = self.rest();
        if !rest.chars().next().is_some_and(is_ident_start) {
            return None;
        }
        let end = rest.find(|c: char| !is_ident_char(c)).unwrap_or(rest.len());
        let word = &rest[..end];
        if KEYWORDS.contains(&word) {
            return None;
        }
        self.pos += end;
        Some(word.to_owned())
    }

    // ---- programs ----

    fn seq(&mut self) -> PResult<Program> {
        self.enter()?;
        self.skip_ws();
        let mut items = vec![(self.pos, self.par()?)];
        loop {
            self.skip_ws();
            let at = self.pos;
            if !self.eat(";") {
                break;
            }
            items.push((at, self.par()?));
        }
        // Fold right; each Seq node spans from its first operand to the end.
        let (_, mut acc) = items.pop().expect("at least one item");
        while let Some((start, first)) = items.pop() {
            let start = first.span.start.min(start);
            let mut node = Program::seq(first, acc);
            node.span = self.span_from(start);
            acc = node;
        }
        self.leave();
        Ok(acc)
    }

    fn par(&mut self) -> PResult<Program> {
        self.enter()?;
        self.skip_ws();
        let start = self.pos;
        let mut acc = self.primary()?;
        while self.eat("||") {
            let rhs = self.primary()?;
            let mut node = Program::par(acc, rhs);
            node.span = self.span_from(start);
            acc = node;
        }
        self.leave();
        Ok(acc)
    }

    fn primary(&mut self) -> PResult<Program> {
        self.enter()?;
        self.skip_ws();
        let start = self.pos;
        let kind = if self.eat_keyword("return") {
            ProgramKind::Return
        } else if self.eat_keyword("get") {
            ProgramKind::Get
        } else if self.eat_keyword("pure") {
            ProgramKind::Pure(self.expr()?)
        } else if self.eat_keyword("put") {
            ProgramKind::Put(self.expr()?)
        } else if self.eat_keyword("if") {
            let cond = self.seq()?;
            self.expect_keyword("then")?;
            let then = self.seq()?;
            self.expect_keyword("else")?;
            let els = self.par()?;
            ProgramKind::If(Box::new(cond), Box::new(then), Box::new(els))
        } else if self.eat_keyword("recfun") {
            let Some(name) = self.process_name() else {
                let found = self.describe_next();
                return self.error(format!("unexpected {found}"), &["recursion name"]);
            };
            self.expect(":")?;
            self.fix_scope.push(name.clone());
            let body = self.seq();
            self.fix_scope.pop();
            ProgramKind::Fix(name, Box::new(body?))
        } else if self.eat("(") {
            let inner = self.seq()?;
            self.expect(")")?;
            self.leave();
            // Parentheses do not create nodes; keep the inner span.
            return Ok(inner);
        } else if let Some(name) = self.process_name() {
            if self.fix_scope.iter().any(|n| *n == name) {
                ProgramKind::Rec(name)
            } else {
                ProgramKind::BaseProc(name)
            }
        } else {
            let found = self.describe_next();
            return self.error(
                format!("unexpected {found}"),
                &["'return'", "'get'", "'pure'", "'put'", "'if'", "'recfun'", "'('", "process name"],
            );
        };
        self.leave();
        Ok(Program { kind, span: self.span_from(start) })
    }

    // ---- expressions ----

    fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        self.skip_ws();
        let start = self.pos;
        let e = if self.eat_keyword("lambda") {
            let Some(param) = self.var_name() else {
                let found = self.describe_next();
                return self.error(format!("unexpected {found}"), &["parameter name"]);
            };
            self.expect(".")?;
            let body = self.expr()?;
            Expr { kind: ExprKind::Lambda(param, Arc::new(body)), span: self.span_from(start) }
        } else {
            self.additive()?
        };
        self.leave();
        Ok(e)
    }

    fn additive_op(&mut self) -> Option<BinOp> {
        self.skip_ws();
        let rest = self.rest();
        let (op, len) = if rest.starts_with("++") {
            (BinOp::Append, 2)
        } else if rest.starts_with('+') {
            (BinOp::Add, 1)
        } else if rest.starts_with('-') {
            (BinOp::Sub, 1)
        } else if rest.starts_with('|') && !rest.starts_with("||") {
            (BinOp::Merge, 1)
        } else {
            return None;
        };
        self.pos += len;
        Some(op)
    }

    fn additive(&mut self) -> PResult<Expr> {
        self.skip_ws();
        let start = self.pos;
        let mut acc = self.multiplicative()?;
        while let Some(op) = self.additive_op() {
            let rhs = self.multiplicative()?;
            acc = Expr {
                kind: ExprKind::Binary(op, Box::new(acc), Box::new(rhs)),
                span: self.span_from(start),
            };
        }
        Ok(acc)
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        self.skip_ws();
        let start = self.pos;
        let mut acc = self.postfix()?;
        loop {
            let op = if self.eat("*") {
                BinOp::Mul
            } else if self.eat("/") {
                BinOp::Div
            } else {
                break;
            };
            let rhs = self.postfix()?;
            acc = Expr {
                kind: ExprKind::Binary(op, Box::new(acc), Box::new(rhs)),
                span: self.span_from(start),
            };
        }
        Ok(acc)
    }

    fn postfix(&mut self) -> PResult<Expr> {
        self.skip_ws();
        let start = self.pos;
        let mut acc = self.atom()?;
        let mut nested = 0;
        loop {
            if self.eat("[") {
                let idx = self.expr()?;
                self.expect("]")?;
                acc = Expr {
                    kind: ExprKind::Index(Box::new(acc), Box::new(idx)),
                    span: self.span_from(start),
                };
            } else if self.eat("(") {
                let arg = self.expr()?;
                self.expect(")")?;
                acc = Expr {
                    kind: ExprKind::Apply(Box::new(acc), Box::new(arg)),
                    span: self.span_from(start),
                };
            } else {
                break;
            }
            nested += 1;
            if self.depth + nested > MAX_NESTING {
                return self.error(format!("nesting deeper than {MAX_NESTING} levels"), &[]);
            }
        }
        Ok(acc)
    }

    fn atom(&mut self) -> PResult<Expr> {
        self.enter()?;
        self.skip_ws();
        let start = self.pos;
        let e = if self.eat("(") {
            let inner = self.expr()?;
            self.expect(")")?;
            inner
        } else if let Some(name) = self.var_name() {
            Expr { kind: ExprKind::Var(name), span: self.span_from(start) }
        } else if self.starts_literal() {
            let v = self.literal()?;
            Expr { kind: ExprKind::Lit(v), span: self.span_from(start) }
        } else {
            let found = self.describe_next();
            return self.error(
                format!("unexpected {found}"),
                &["variable", "literal", "'('", "'lambda'"],
            );
        };
        self.leave();
        Ok(e)
    }

    fn starts_literal(&mut self) -> bool {
        self.skip_ws();
        let rest = self.rest();
        matches!(rest.chars().next(), Some('"' | '[' | '{' | '0'..='9'))
            || (rest.starts_with('-') && rest[1..].starts_with(|c: char| c.is_ascii_digit()))
            || self.at_keyword("true")
            || self.at_keyword("false")
            || self.at_keyword("null")
    }

    fn literal(&mut self) -> PResult<Value> {
        self.enter()?;
        self.skip_ws();
        let v = match self.peek() {
            Some('"') => Value::Text(self.string()?),
            Some('[') => {
                self.bump();
                let mut items = Vec::new();
                if !self.eat("]") {
                    loop {
                        items.push(self.literal()?);
                        if self.eat("]") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Value::List(items)
            }
            Some('{') => {
                self.bump();
                let mut map = BTreeMap::new();
                if !self.eat("}") {
                    loop {
                        self.skip_ws();
                        let key_at = self.pos;
                        if self.peek() != Some('"') {
                            let found = self.describe_next();
                            return self.error(format!("unexpected {found}"), &["string key"]);
                        }
                        let key = self.string()?;
                        self.expect(":")?;
                        let val = self.literal()?;
                        if map.insert(key.clone(), val).is_some() {
                            self.pos = key_at;
                            return self.error(format!("duplicate key {key:?} in dict literal"), &[]);
                        }
                        if self.eat("}") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Value::Map(map)
            }
            Some(c) if c == '-' || c.is_ascii_digit() => Value::Number(self.number()?),
            _ if self.eat_keyword("true") => Value::Bool(true),
            _ if self.eat_keyword("false") => Value::Bool(false),
            _ if self.eat_keyword("null") => Value::Null,
            _ => {
                let found = self.describe_next();
                return self.error(format!("unexpected {found}"), &["literal value"]);
            }
        };
        self.leave();
        Ok(v)
    }

    fn number(&mut self) -> PResult<f64> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        if bytes.get(i) == Some(&b'-') {
            i += 1;
        }
        let digits = |i: &mut usize| {
            let from = *i;
            while bytes.get(*i).is_some_and(u8::is_ascii_digit) {
                *i += 1;
            }
            *i > from
        };
        if !digits(&mut i) {
            return self.error("malformed number", &["digit"]);
        }
        if bytes.get(i) == Some(&b'.') && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
            i += 1;
            digits(&mut i);
        }
        if matches!(bytes.get(i), Some(b'e' | b'E')) {
            let mut j = i + 1;
            if matches!(bytes.get(j), Some(b'+' | b'-')) {
                j += 1;
            }
            if digits(&mut j) {
                i = j;
            }
        }
        let text = &self.src[start..i];
        match text.parse::<f64>() {
            Ok(n) if n.is_finite() => {
                self.pos = i;
                Ok(n)
            }
            _ => self.error(format!("number out of range: {text}"), &[]),
        }
    }

    fn string(&mut self) -> PResult<String> {
        debug_assert_eq!(self.peek(), Some('"'));
        self.bump();
        let mut out = String::new();
        loop {
            let Some(c) = self.bump() else {
                return self.error("unterminated string literal", &["'\"'"]);
            };
            match c {
                '"' => return Ok(out),
                '\\' => {
                    let esc = self.bump();
                    match esc {
                        Some('"') => out.push('"'),
                        Some('\\') => out.push('\\'),
                        Some('/') => out.push('/'),
                        Some('n') => out.push('\n'),
                        Some('t') => out.push('\t'),
                        Some('r') => out.push('\r'),
                        Some('b') => out.push('\u{8}'),
                        Some('f') => out.push('\u{c}'),
                        Some('u') => out.push(self.unicode_escape()?),
                        _ => return self.error("invalid escape sequence", &[]),
                    }
                }
                c => out.push(c),
            }
        }
    }

    fn hex4(&mut self) -> PResult<u32> {
        let rest = self.rest();
        match rest.get(..4).and_then(|h| u32::from_str_radix(h, 16).ok()) {
            Some(v) if rest[..4].chars().all(|c| c.is_ascii_hexdigit()) => {
                self.pos += 4;
                Ok(v)
            }
            _ => self.error("invalid \\u escape", &["4 hex digits"]),
        }
    }

    fn unicode_escape(&mut self) -> PResult<char> {
        let hi = self.hex4()?;
        if (0xD800..0xDC00).contains(&hi) {
            if !self.rest().starts_with("\\u") {
                return self.error("unpaired surrogate in \\u escape", &[]);
            }
            self.pos += 2;
            let lo = self.hex4()?;
            if !(0xDC00..0xE000).contains(&lo) {
                return self.error("invalid low surrogate in \\u escape", &[]);
            }
            let cp = 0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00);
            return char::from_u32(cp).map_or_else(|| self.error("invalid code point", &[]), Ok);
        }
        char::from_u32(hi).map_or_else(|| self.error("invalid code point", &[]), Ok)
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::binary(op, a, b)
    }

    #[test]
    fn smallest_program() {
        assert_eq!(parse_strategy("return").unwrap(), Program::ret());
    }

    #[test]
    fn codeact_reference_text() {
        let p = parse_strategy(
            "recfun CodeAct: CallLLM; if ContainsCode then (ExecCode; CodeAct) else return",
        )
        .unwrap();
        let expected = Program::fix(
            "CodeAct",
            Program::seq(
                Program::base("CallLLM"),
                Program::if_(
                    Program::base("ContainsCode"),
                    Program::seq(Program::base("ExecCode"), Program::rec("CodeAct")),
                    Program::ret(),
                ),
            ),
        );
        assert_eq!(p, expected);
    }

    #[test]
    fn seq_is_right_assoc_and_par_binds_tighter() {
        let p = parse_strategy("A; B || C; D").unwrap();
        let expected = Program::seq(
            Program::base("A"),
            Program::seq(
                Program::par(Program::base("B"), Program::base("C")),
                Program::base("D"),
            ),
        );
        assert_eq!(p, expected);
        let p = parse_strategy("A || B || C").unwrap();
        assert_eq!(
            p,
            Program::par(Program::par(Program::base("A"), Program::base("B")), Program::base("C"))
        );
    }

    #[test]
    fn hyphenated_process_names() {
        let p = parse_strategy("recfun Eval-Opt: CallOptLLM; if EvalLLM then return else Eval-Opt")
            .unwrap();
        match &p.kind {
            ProgramKind::Fix(name, _) => assert_eq!(name, "Eval-Opt"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expression_precedence() {
        let e = parse_expr("1 + 2 * 3").unwrap();
        assert_eq!(
            e,
            bin(BinOp::Add, Expr::lit(1.0), bin(BinOp::Mul, Expr::lit(2.0), Expr::lit(3.0)))
        );
        let e = parse_expr("lambda x. x + 1").unwrap();
        assert_eq!(e, Expr::lambda("x", bin(BinOp::Add, Expr::var("x"), Expr::lit(1.0))));
        let e = parse_expr("xs[0] ++ ys").unwrap();
        assert_eq!(
            e,
            bin(BinOp::Append, Expr::index(Expr::var("xs"), Expr::lit(0.0)), Expr::var("ys"))
        );
        let e = parse_expr("f(x)[1] * 2").unwrap();
        assert_eq!(
            e,
            bin(
                BinOp::Mul,
                Expr::index(Expr::apply(Expr::var("f"), Expr::var("x")), Expr::lit(1.0)),
                Expr::lit(2.0)
            )
        );
    }

    #[test]
    fn negative_literals_and_subtraction() {
        assert_eq!(
            parse_expr("a - -1").unwrap(),
            bin(BinOp::Sub, Expr::var("a"), Expr::lit(-1.0))
        );
        assert_eq!(parse_expr("a-1").unwrap(), bin(BinOp::Sub, Expr::var("a"), Expr::lit(1.0)));
    }

    #[test]
    fn merge_is_not_confused_with_par() {
        let p = parse_strategy("pure {\"a\": 1} | x || return").unwrap();
        match p.kind {
            ProgramKind::Par(l, r) => {
                assert!(matches!(l.kind, ProgramKind::Pure(_)));
                assert_eq!(*r, Program::ret());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn errors_carry_span_and_expected_set() {
        let err = parse_strategy("CallLLM;\n  ;").unwrap_err();
        assert_eq!((err.span.line, err.span.column), (2, 3));
        assert!(err.expected.iter().any(|e| e.contains("return")));

        let err = parse_strategy("if A then B").unwrap_err();
        assert!(err.expected.contains(&"'else'".to_owned()));
        assert!(parse_expr("{\"a\": 1, \"a\": 2}").is_err());
        assert!(parse_expr("[x]").is_err());
    }

    #[test]
    fn comments_and_strings() {
        let p = parse_strategy("# header\npure \"a # not a comment\\n\" # trailing\n").unwrap();
        assert_eq!(p, Program::pure(Expr::lit("a # not a comment\n")));
        assert_eq!(parse_value("\"\\ud83d\\ude00\"").unwrap(), Value::text("😀"));
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let text = "(".repeat(10_000) + "return" + &")".repeat(10_000);
        assert!(parse_strategy(&text).is_err());
        let text = "x".to_owned() + &"[0]".repeat(5_000);
        assert!(parse_expr(&text).is_err());
    }

    #[test]
    fn spans_point_at_nodes() {
        let p = parse_strategy("A;\n  B").unwrap();
        let ProgramKind::Seq(_, b) = &p.kind else { panic!() };
        assert_eq!((b.span.line, b.span.column, b.span.start, b.span.end), (2, 3, 5, 6));
    }
}
