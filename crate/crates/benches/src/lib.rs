//! Workloads shared by the benchmarks.

use std::sync::Arc;

use egur_core::backends::{Completion, CompletionRequest, FnBackend, PricingTable};
use egur_core::bench::TaskInstance;
use egur_core::egur::{Egur, EgurConfig};
use egur_core::lang::{Program, Value};
use egur_core::processes::{ProcessCall, ProcessDeps, ProcessEntry, ProcessError, ProcessRegistry};
use egur_core::strategies::balanced_par;

/// Strategy texts of increasing size.
pub fn strategy_texts() -> Vec<(&'static str, String)> {
    let codeact = "recfun CodeAct: CallLLM; if ContainsCode then (ExecCode; CodeAct) else return".to_owned();
    let chain = vec!["CallLLM"; 64].join("; ");
    let wide = (0..6).fold("CallLLM".to_owned(), |acc, _| format!("({acc}) || ({acc})"));
    vec![("codeact", codeact), ("chain64", chain), ("par64", wide)]
}

/// One cheap, deterministic process named `Step`.
pub fn step_registry() -> ProcessRegistry {
    let mut r = ProcessRegistry::new();
    r.register(
        "Step",
        ProcessEntry::new(|input: &Value, call: &mut ProcessCall<'_>| -> Result<Value, ProcessError> {
            call.charge(10, 5, egur_core::Usd::ZERO);
            Ok(match input {
                Value::Number(n) => Value::Number(n + 1.0),
                other => other.clone(),
            })
        }),
    );
    r
}

pub fn step_chain(n: usize) -> Program {
    Program::seq_all((0..n).map(|_| Program::base("Step")))
}

pub fn step_tree(leaves: usize) -> Program {
    balanced_par(leaves, &|| Program::base("Step"))
}

pub fn sum_tasks(n: usize) -> Vec<TaskInstance> {
    (0..n)
        .map(|i| TaskInstance::exact(format!("t{i:03}"), format!("What is {i} plus {i}?"), (2 * i).to_string()))
        .collect()
}

/// A reasoner whose backend answers instantly: guides propose single
/// calls, execution answers correctly, consolidators add one note.
pub fn instant_reasoner(k: usize) -> Egur {
    let backend = FnBackend::new(PricingTable::free(), |req: &CompletionRequest<'_>| {
        let text = if req.partition.starts_with("guide/") {
            "```\nCallLLM\n```".to_owned()
        } else if req.partition.starts_with("consolidate/") {
            "<edits>\nADD NOTE: single calls suffice\n</edits>".to_owned()
        } else {
            let q = req.messages.last().map(|m| m.content.as_str()).unwrap_or("");
            let n: u64 = q.split_whitespace().find_map(|w| w.parse().ok()).unwrap_or(0);
            format!("FINAL ANSWER: {}", 2 * n)
        };
        Ok(Completion::new(text, 100, 20))
    })
    .shared();
    let registry = Arc::new(ProcessRegistry::standard(ProcessDeps::new(Arc::clone(&backend))));
    Egur::new(backend, registry).with_config(EgurConfig { k, ..EgurConfig::default() })
}
