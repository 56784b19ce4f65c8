//! Binary verifiers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::text::normalize_answer;
use crate::bench::{CnfFormula, TaskInstance};

/// Correct or incorrect, with detail reserved for the consolidator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryVerdict {
    pub correct: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl BinaryVerdict {
    pub fn correct() -> Self {
        BinaryVerdict { correct: true, detail: String::new() }
    }

    pub fn incorrect(detail: impl Into<String>) -> Self {
        BinaryVerdict { correct: false, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerifyError {
    #[error("task {0} has no gold answer")]
    MissingGold(String),
    #[error("task {0} has no formula")]
    MissingFormula(String),
    #[error("unparseable assignment: {0}")]
    Unparseable(String),
    #[error("assignment leaves variables unset: {0}")]
    MissingVariables(String),
}

/// Exact match after case folding and whitespace collapsing.
pub fn verify_exact(task: &TaskInstance, answer: &str) -> Result<BinaryVerdict, VerifyError> {
    let gold = task.gold.as_deref().ok_or_else(|| VerifyError::MissingGold(task.id.clone()))?;
    if normalize_answer(gold) == normalize_answer(answer) {
        Ok(BinaryVerdict::correct())
    } else {
        Ok(BinaryVerdict::incorrect(format!("expected {gold:?}, got {answer:?}")))
    }
}

/// Parses `x1=T,x2=F`. Whitespace is ignored and `T`/`F` are
/// case-insensitive.
pub fn parse_assignment(text: &str) -> Result<BTreeMap<u32, bool>, VerifyError> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let mut out = BTreeMap::new();
    if compact.is_empty() {
        return Err(VerifyError::Unparseable("empty assignment".into()));
    }
    for tok in compact.split(',').filter(|t| !t.is_empty()) {
        let bad = || VerifyError::Unparseable(format!("bad token `{tok}`"));
        let (var, val) = tok.split_once('=').ok_or_else(bad)?;
        let idx: u32 = var
            .strip_prefix(['x', 'X'])
            .and_then(|n| n.parse().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(bad)?;
        let b = match val {
            "T" | "t" => true,
            "F" | "f" => false,
            _ => return Err(bad()),
        };
        if out.insert(idx, b).is_some_and(|prev| prev != b) {
            return Err(VerifyError::Unparseable(format!("x{idx} assigned twice")));
        }
    }
    Ok(out)
}

/// Correct when the assignment satisfies every clause.
pub fn verify_3sat(formula: &CnfFormula, answer: &str) -> Result<BinaryVerdict, VerifyError> {
    let assign = parse_assignment(answer)?;
    let missing: Vec<String> =
        (1..=formula.num_vars).filter(|v| !assign.contains_key(v)).map(|v| format!("x{v}")).collect();
    if !missing.is_empty() {
        return Err(VerifyError::MissingVariables(missing.join(",")));
    }
    let values: Vec<bool> = (1..=formula.num_vars).map(|v| assign[&v]).collect();
    match formula.first_unsatisfied(&values) {
        None => Ok(BinaryVerdict::correct()),
        Some(i) => Ok(BinaryVerdict::incorrect(format!("clause {} is unsatisfied", i + 1))),
    }
}
