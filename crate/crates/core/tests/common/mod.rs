//! Fixtures shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use egur_core::backends::{Backend, Completion, CompletionRequest, FnBackend, PricingTable, ScriptEntry, ScriptedBackend};
use egur_core::bench::TaskInstance;
use egur_core::egur::{Egur, EgurConfig};
use egur_core::lang::{BinOp, Expr, ExprKind, Program, ProgramKind, Value};
use egur_core::processes::{ProcessCall, ProcessDeps, ProcessEntry, ProcessError, ProcessRegistry, STANDARD_PROCESSES};
use egur_core::semantics::Usd;
use proptest::prelude::*;

pub fn usd(s: &str) -> Usd {
    s.parse().unwrap()
}

pub fn standard_names() -> BTreeSet<String> {
    STANDARD_PROCESSES.iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------------------
// Pure processes and their reference semantics

pub const PURE_PROCESSES: &[&str] = &["Inc", "Double", "Wrap", "IsNum", "Size"];

/// Per-call charges of the priced registry: (input tokens, output tokens, usd).
pub const CHARGES: &[(&str, u64, u64, &str)] = &[
    ("Inc", 1, 2, "0.001"),
    ("Double", 10, 20, "0.01"),
    ("Wrap", 0, 1, "0.0001"),
    ("IsNum", 100, 0, "0.1"),
    ("Size", 3, 3, "0.000003"),
];

/// Independent statement of what each pure process computes.
pub fn pure_apply(name: &str, v: &Value) -> Value {
    match (name, v) {
        ("Inc", Value::Number(n)) => Value::Number(n + 1.0),
        ("Double", Value::Number(n)) => Value::Number(n * 2.0),
        ("Double", Value::Text(t)) => Value::Text(format!("{t}{t}")),
        ("Inc" | "Double", other) => other.clone(),
        ("Wrap", other) => Value::List(vec![other.clone()]),
        ("IsNum", other) => Value::Bool(matches!(other, Value::Number(_))),
        ("Size", Value::List(xs)) => Value::Number(xs.len() as f64),
        ("Size", Value::Text(t)) => Value::Number(t.chars().count() as f64),
        ("Size", Value::Map(m)) => Value::Number(m.len() as f64),
        ("Size", _) => Value::Number(0.0),
        _ => unreachable!("unknown pure process {name}"),
    }
}

fn registry_with(charged: bool) -> ProcessRegistry {
    let mut r = ProcessRegistry::new();
    for &(name, i, o, price) in CHARGES {
        let price = usd(price);
        r.register(
            name,
            ProcessEntry::new(move |input: &Value, call: &mut ProcessCall<'_>| -> Result<Value, ProcessError> {
                if charged {
                    call.charge(i, o, price);
                }
                Ok(pure_apply(name, input))
            }),
        );
    }
    r
}

pub fn pure_registry() -> ProcessRegistry {
    registry_with(false)
}

pub fn priced_registry() -> ProcessRegistry {
    registry_with(true)
}

/// Reference evaluator for fix-free programs over the pure processes and
/// the expression subset the generator emits. Returns output and final
/// user state.
pub fn reference_run(p: &Program, input: Value, state: Value) -> Result<(Value, Value), String> {
    match &p.kind {
        ProgramKind::BaseProc(name) => Ok((pure_apply(name, &input), state)),
        ProgramKind::Return => Ok((input, state)),
        ProgramKind::Get => Ok((state.clone(), state)),
        ProgramKind::Pure(e) => Ok((reference_expr(e, &input)?, state)),
        ProgramKind::Put(e) => {
            let s = reference_expr(e, &input)?;
            Ok((input, s))
        }
        ProgramKind::Seq(a, b) => {
            let (mid, s) = reference_run(a, input, state)?;
            reference_run(b, mid, s)
        }
        ProgramKind::Par(a, b) => {
            let (l, sl) = reference_run(a, input.clone(), state.clone())?;
            let (r, sr) = reference_run(b, input, state)?;
            let merged = BTreeMap::from([("left".to_owned(), sl), ("right".to_owned(), sr)]);
            Ok((Value::List(vec![l, r]), Value::Map(merged)))
        }
        ProgramKind::If(c, t, e) => {
            let (v, s) = reference_run(c, input.clone(), state)?;
            match v {
                Value::Bool(true) => reference_run(t, input, s),
                Value::Bool(false) => reference_run(e, input, s),
                _ => Err("condition is not boolean".into()),
            }
        }
        ProgramKind::Fix(..) | ProgramKind::Rec(_) => Err("recursion is outside the reference subset".into()),
    }
}

fn reference_expr(e: &Expr, input: &Value) -> Result<Value, String> {
    match &e.kind {
        ExprKind::Lit(v) => Ok(v.clone()),
        ExprKind::Var(n) if n == "input" => Ok(input.clone()),
        ExprKind::Binary(BinOp::Add, a, b) => match (reference_expr(a, input)?, reference_expr(b, input)?) {
            (Value::Number(x), Value::Number(y)) => Ok(Value::Number(x + y)),
            _ => Err("+ needs numbers".into()),
        },
        ExprKind::Binary(BinOp::Append, a, b) => match (reference_expr(a, input)?, reference_expr(b, input)?) {
            (Value::List(mut x), Value::List(y)) => {
                x.extend(y);
                Ok(Value::List(x))
            }
            (Value::Text(x), Value::Text(y)) => Ok(Value::Text(x + &y)),
            _ => Err("++ needs two lists or two texts".into()),
        },
        ExprKind::Index(a, i) => match (reference_expr(a, input)?, reference_expr(i, input)?) {
            (Value::List(xs), Value::Number(n)) if n >= 0.0 && n.fract() == 0.0 && (n as usize) < xs.len() => {
                Ok(xs[n as usize].clone())
            }
            _ => Err("bad index".into()),
        },
        _ => Err("expression outside the reference subset".into()),
    }
}

// ---------------------------------------------------------------------------
// Generators

fn small_number() -> impl Strategy<Value = f64> {
    (-20i32..20).prop_map(f64::from)
}

fn num_list() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(small_number(), 0..4)
}

fn list_lit(xs: Vec<f64>) -> Expr {
    Expr::lit(Value::List(xs.into_iter().map(Value::Number).collect()))
}

/// Expressions in the reference subset, mostly well typed.
pub fn arb_subset_expr() -> impl Strategy<Value = Expr> {
    let numeric = small_number().prop_map(Expr::lit).prop_recursive(2, 6, 2, |inner| {
        (inner.clone(), inner).prop_map(|(a, b)| Expr::binary(BinOp::Add, a, b))
    });
    let text = ("[a-c]{0,3}", "[a-c]{0,3}")
        .prop_map(|(a, b)| Expr::binary(BinOp::Append, Expr::lit(Value::Text(a)), Expr::lit(Value::Text(b))));
    let list = (num_list(), num_list()).prop_map(|(a, b)| Expr::binary(BinOp::Append, list_lit(a), list_lit(b)));
    let indexed = (prop::collection::vec(small_number(), 1..4), any::<prop::sample::Index>())
        .prop_map(|(xs, i)| {
            let at = i.index(xs.len()) as f64;
            Expr::index(list_lit(xs), Expr::lit(at))
        });
    prop_oneof![
        3 => numeric,
        1 => text,
        1 => list,
        1 => indexed,
        3 => Just(Expr::var("input")),
        2 => arb_untyped_expr(),
    ]
}

/// Arbitrary expressions in the subset, often ill typed.
pub fn arb_untyped_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        3 => small_number().prop_map(Expr::lit),
        3 => Just(Expr::var("input")),
        1 => "[a-c]{0,3}".prop_map(|s| Expr::lit(Value::Text(s))),
        1 => num_list().prop_map(list_lit),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinOp::Add, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinOp::Append, a, b)),
            (inner, 0i32..3).prop_map(|(a, i)| Expr::index(a, Expr::lit(f64::from(i)))),
        ]
    })
}

/// Fix-free programs over the pure processes with depth at most `depth`.
pub fn arb_pure_program(depth: u32) -> impl Strategy<Value = Program> {
    let leaf = prop_oneof![
        4 => prop::sample::select(PURE_PROCESSES).prop_map(Program::base),
        1 => Just(Program::ret()),
        1 => Just(Program::get()),
        1 => arb_subset_expr().prop_map(Program::pure),
        1 => arb_subset_expr().prop_map(Program::put),
    ];
    leaf.prop_recursive(depth.saturating_sub(1), 48, 3, |inner| {
        prop_oneof![
            3 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Program::seq(a, b)),
            2 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Program::par(a, b)),
            1 => (inner.clone(), inner.clone(), inner.clone()).prop_map(|(c, t, e)| Program::if_(c, t, e)),
            // Conditions that are boolean by construction.
            4 => (inner.clone(), inner.clone(), inner).prop_map(|(c, t, e)| {
                Program::if_(Program::seq(c, Program::base("IsNum")), t, e)
            }),
        ]
    })
    .prop_filter("control depth", move |p| control_depth(p) <= depth as usize)
}

/// Nesting depth of the control structure, ignoring expressions.
pub fn control_depth(p: &Program) -> usize {
    match &p.kind {
        ProgramKind::Seq(a, b) | ProgramKind::Par(a, b) => 1 + control_depth(a).max(control_depth(b)),
        ProgramKind::If(c, t, e) => 1 + control_depth(c).max(control_depth(t)).max(control_depth(e)),
        ProgramKind::Fix(_, b) => 1 + control_depth(b),
        _ => 1,
    }
}

pub fn arb_input() -> impl Strategy<Value = Value> {
    prop_oneof![
        small_number().prop_map(Value::Number),
        "[a-z]{0,4}".prop_map(Value::Text),
        prop::collection::vec(small_number().prop_map(Value::Number), 0..3).prop_map(Value::List),
        Just(Value::Null),
    ]
}

fn arb_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        (-1000i32..1000, 0u8..4).prop_map(|(n, d)| Value::Number(f64::from(n) / f64::from(1 << d))),
        "[a-zA-Z0-9 _\"\\\\\n\t]{0,8}".prop_map(Value::Text),
    ];
    leaf.prop_recursive(2, 10, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..3).prop_map(Value::List),
            prop::collection::btree_map("[a-z_]{1,4}", inner, 0..3).prop_map(Value::Map),
        ]
    })
}

fn arb_full_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        arb_value().prop_map(Expr::lit),
        prop::sample::select(vec!["input", "x", "y"]).prop_map(Expr::var),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (
                prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Append, BinOp::Merge]),
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::index(a, b)),
            (prop::sample::select(vec!["x", "y"]), inner.clone()).prop_map(|(x, b)| Expr::lambda(x, b)),
            (inner.clone(), inner).prop_map(|(f, a)| Expr::apply(f, a)),
        ]
    })
}

const FIX_NAMES: &[&str] = &["Loop", "Retry", "Refine"];
const BASE_NAMES: &[&str] = &["CallLLM", "ExecCode", "ContainsCode", "Inc", "Eval-Opt"];

/// Any program, including recursion and the full expression language.
/// Recursive references only appear inside a binder of the same name.
pub fn arb_program() -> impl Strategy<Value = Program> {
    let leaf = prop_oneof![
        4 => prop::sample::select(BASE_NAMES).prop_map(Program::base),
        2 => prop::sample::select(FIX_NAMES).prop_map(Program::rec),
        1 => Just(Program::ret()),
        1 => Just(Program::get()),
        1 => arb_full_expr().prop_map(Program::pure),
        1 => arb_full_expr().prop_map(Program::put),
    ];
    let raw = leaf.prop_recursive(5, 40, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Program::seq(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Program::par(a, b)),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(c, t, e)| Program::if_(c, t, e)),
            (prop::sample::select(FIX_NAMES), inner).prop_map(|(n, b)| Program::fix(n, b)),
        ]
    });
    raw.prop_map(|p| scope_recursion(p, &mut Vec::new()))
}

fn scope_recursion(p: Program, scope: &mut Vec<String>) -> Program {
    let kind = match p.kind {
        ProgramKind::Rec(n) if !scope.contains(&n) => ProgramKind::BaseProc("Inc".into()),
        ProgramKind::Seq(a, b) => ProgramKind::Seq(Box::new(scope_recursion(*a, scope)), Box::new(scope_recursion(*b, scope))),
        ProgramKind::Par(a, b) => ProgramKind::Par(Box::new(scope_recursion(*a, scope)), Box::new(scope_recursion(*b, scope))),
        ProgramKind::If(c, t, e) => ProgramKind::If(
            Box::new(scope_recursion(*c, scope)),
            Box::new(scope_recursion(*t, scope)),
            Box::new(scope_recursion(*e, scope)),
        ),
        ProgramKind::Fix(n, b) => {
            scope.push(n.clone());
            let b = scope_recursion(*b, scope);
            scope.pop();
            ProgramKind::Fix(n, Box::new(b))
        }
        other => other,
    };
    Program::new(kind)
}

// ---------------------------------------------------------------------------
// Loop fixtures

pub fn exact_task(i: usize) -> TaskInstance {
    let (a, b) = (i + 2, 3 * i + 1);
    TaskInstance::exact(format!("t{i:02}"), format!("What is {a} plus {b}?"), (a + b).to_string())
}

/// Sum asked for by an `exact_task` question.
pub fn asked_sum(text: &str) -> Option<u64> {
    let start = text.find("What is ")? + "What is ".len();
    let rest = &text[start..];
    let (a, rest) = rest.split_once(" plus ")?;
    let b = rest.split('?').next()?;
    Some(a.trim().parse::<u64>().ok()? + b.trim().parse::<u64>().ok()?)
}

pub fn pricing() -> PricingTable {
    PricingTable::from_strs("1", "2").unwrap()
}

fn reply(text: impl Into<String>, i: u64, o: u64) -> Result<Completion, egur_core::backends::BackendError> {
    Ok(Completion::new(text, i, o))
}

pub fn loop_with(backend: Arc<dyn Backend>, k: usize) -> Egur {
    let registry = Arc::new(ProcessRegistry::standard(ProcessDeps::new(Arc::clone(&backend))));
    let config = EgurConfig { k, shuffle: false, ..EgurConfig::default() };
    Egur::new(backend, registry).with_config(config)
}

pub fn scripted(entries: &[(&str, &str)]) -> Arc<dyn Backend> {
    let entries = entries.iter().map(|(p, t)| ScriptEntry {
        partition: p.to_string(),
        text: t.to_string(),
        input_tokens: 10,
        output_tokens: 10,
    });
    Arc::new(ScriptedBackend::from_entries(entries, pricing()))
}

/// Four questions, one candidate each, scripted so the first three are
/// answered correctly and the last is not.
pub fn three_of_four() -> (Egur, Vec<TaskInstance>) {
    let tasks: Vec<TaskInstance> = (0..4).map(exact_task).collect();
    let mut entries: Vec<(String, String)> = Vec::new();
    for t in &tasks {
        entries.push(("guide".into(), "```\nCallLLM\n```".into()));
        let ans = if t.id == "t03" { "0".to_owned() } else { t.gold.clone().unwrap() };
        entries.push((format!("exec/{}", t.id), format!("Adding.\nFINAL ANSWER: {ans}")));
        entries.push(("consolidate".into(), "<edits>\nADD NOTE: one call is enough for sums\n</edits>".into()));
    }
    let refs: Vec<(&str, &str)> = entries.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    (loop_with(scripted(&refs), 1), tasks)
}

pub const WIN_STRATEGY: &str = "put {\"system\": \"Use the lookup table.\"}; CallLLM";
pub const LOSE_STRATEGY: &str = "CallLLM || CallLLM; MajorityVote";

/// Backend for the learning fixture. The guide proposes the winning
/// strategy in slot 1 only once memory holds it; the consolidator stores
/// it the first time it sees a correct attempt and memory is empty.
pub fn learning_backend() -> Arc<dyn Backend> {
    FnBackend::new(pricing(), |req: &CompletionRequest<'_>| {
        let last = req.messages.last().map(|m| m.content.as_str()).unwrap_or("");
        if req.partition.starts_with("guide/") {
            let slot = req.partition.rsplit('/').next().unwrap_or("1");
            let remembered = last.contains("<memory_entry-");
            let strat = if slot == "1" && !remembered { LOSE_STRATEGY } else { WIN_STRATEGY };
            return reply(format!("```\n{strat}\n```"), 500, 40);
        }
        if req.partition.starts_with("consolidate/") {
            if last.contains("Verdict: correct") && !last.contains("<memory_entry-") {
                return reply(format!("<edits>\nADD STRATEGY auto:\n```\n{WIN_STRATEGY}\n```\n</edits>"), 800, 60);
            }
            return reply("<edits>\n</edits>", 800, 5);
        }
        let system = req.messages.first().map(|m| m.content.as_str()).unwrap_or("");
        let question = req.messages.iter().rev().find_map(|m| asked_sum(&m.content));
        match question {
            Some(sum) if system.contains("lookup table") => reply(format!("FINAL ANSWER: {sum}"), 50, 10),
            _ => reply("Let me think at length.\nFINAL ANSWER: 0", 200, 400),
        }
    })
    .shared()
}

pub fn learning_fixture(n: usize) -> (Egur, Vec<TaskInstance>) {
    (loop_with(learning_backend(), 2), (0..n).map(exact_task).collect())
}

// ---------------------------------------------------------------------------
// Hand-computed ledgers for the priced registry

fn num(n: f64) -> Value {
    Value::Number(n)
}

fn text(s: &str) -> Value {
    Value::Text(s.into())
}

/// (program, input, usd worked out by hand from `CHARGES`).
pub fn hand_ledger_cases() -> Vec<(&'static str, Value, &'static str)> {
    vec![
        ("Inc", num(1.0), "0.001"),
        ("Inc; Double", num(1.0), "0.011"),
        ("Inc || Double", num(1.0), "0.011"),
        ("if IsNum then Inc else Double", num(1.0), "0.101"),
        ("if IsNum then Inc else Double", text("a"), "0.11"),
        ("if IsNum then (Inc; Inc) else Wrap", num(1.0), "0.102"),
        ("if IsNum then (Inc; Inc) else Wrap", text("x"), "0.1001"),
        ("Wrap; Size; if IsNum then Double else Inc", num(1.0), "0.110103"),
        ("(Inc || Inc) || Inc", num(1.0), "0.003"),
        ("if Wrap; IsNum then Inc else Size", num(1.0), "0.100103"),
        ("return", num(1.0), "0"),
        ("pure 5; Double", num(1.0), "0.01"),
        ("put {\"a\": 1}; get; Size", num(1.0), "0.000003"),
        ("if IsNum then return else Inc", num(2.0), "0.1"),
        ("if IsNum then return else Inc", text("t"), "0.101"),
        ("Double; Double; Double", num(1.0), "0.03"),
        ("if IsNum then (if IsNum then Wrap else Inc) else Size", num(3.0), "0.2001"),
        ("(if IsNum then Inc else Double) || Size", text("ab"), "0.110003"),
        ("Size; if IsNum then (Wrap; Size) else Inc", text("abc"), "0.100106"),
        ("Inc; Inc; Inc; Inc; if IsNum then return else Double", num(0.0), "0.104"),
    ]
}

/// Sum of the costs of all non-fork events, found by walking the tree.
pub fn leaf_cost(events: &[egur_core::semantics::TraceEvent]) -> Usd {
    events
        .iter()
        .map(|e| if e.is_fork() { leaf_cost(&e.children) } else { e.cost.usd })
        .sum()
}

// ---------------------------------------------------------------------------
// 3-SAT oracle

/// Checks one formula exhaustively: for every assignment the verifier's
/// verdict must equal a direct clause check, and the recorded
/// satisfiability must equal whether any assignment passed.
pub fn sat_agrees_with_brute_force(f: &egur_core::bench::CnfFormula) -> Result<(), String> {
    let n = f.num_vars;
    let mut any = false;
    for bits in 0u32..(1 << n) {
        let value = |v: u32| bits >> (v - 1) & 1 == 1;
        let direct = f.clauses.iter().all(|c| c.iter().any(|&l| value(l.unsigned_abs()) == (l > 0)));
        any |= direct;
        let answer: Vec<String> =
            (1..=n).map(|v| format!("x{v}={}", if value(v) { "T" } else { "F" })).collect();
        let verdict = egur_core::processes::verify_3sat(f, &answer.join(",")).map_err(|e| e.to_string())?;
        if verdict.correct != direct {
            return Err(format!("assignment {bits:b}: verifier {} vs direct {direct}", verdict.correct));
        }
    }
    if f.satisfiable() != Some(any) {
        return Err(format!("satisfiable() = {:?}, exhaustive = {any}", f.satisfiable()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Design patterns and tools of each builtin: (parallelization, conditionals, recursion, tools)

pub fn builtin_structure() -> Vec<(egur_core::strategies::BuiltinName, bool, bool, bool, Vec<egur_core::processes::ToolKind>)> {
    use egur_core::processes::ToolKind::{Ci, Llm};
    use egur_core::strategies::BuiltinName::*;
    vec![
        (Cot, false, false, false, vec![Llm]),
        (SelfConsistency, true, false, false, vec![Llm]),
        (Code, false, true, false, vec![Llm, Ci]),
        (EvalOpt, false, true, true, vec![Llm]),
        (Codeact, false, true, true, vec![Llm, Ci]),
    ]
}
