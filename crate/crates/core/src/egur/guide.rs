//! Candidate strategy generation.

use serde::{Deserialize, Serialize};

use super::prompts::{describe_processes, render, DSL_GRAMMAR, EXPLOIT_INSTRUCTIONS, EXPLORE_INSTRUCTIONS, GUIDE_EXAMPLES};
use super::{canonical_strategy, derive_seed, Context, Egur};
use crate::bench::TaskInstance;
use crate::lang::{parse_strategy, Program};
use crate::processes::extract_code_blocks;
use crate::semantics::{ChatMessage, CostLedger};
use crate::strategies::{build_with_prelude, BuiltinName, BuiltinSpec};

pub const GUIDE_PROCESS: &str = "Guide";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GuideAttempt {
    pub reply: Option<String>,
    pub error: Option<String>,
}

/// How one candidate slot was filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GuideRecord {
    /// 1-based.
    pub slot: usize,
    /// Canonical text of the strategy that will run.
    pub strategy: String,
    pub attempts: Vec<GuideAttempt>,
    pub fell_back: bool,
    pub cost: CostLedger,
}

impl GuideRecord {
    pub fn retries(&self) -> usize {
        self.attempts.len().saturating_sub(1)
    }
}

/// The strategy text in a guide reply: its first fenced block, or the
/// whole reply when there is none.
pub fn extract_strategy(reply: &str) -> String {
    extract_code_blocks(reply).blocks.into_iter().next().unwrap_or_else(|| reply.trim().to_owned())
}

impl Egur {
    /// The guide prompt for one slot.
    pub fn guide_prompt(&self, task: &TaskInstance, ctx: &Context, slot: usize, k: usize) -> String {
        let slot_text = if slot == 1 {
            EXPLOIT_INSTRUCTIONS.to_owned()
        } else {
            render(EXPLORE_INSTRUCTIONS, &[("slot", &slot.to_string()), ("k", &k.to_string())])
        };
        let memory = if ctx.is_empty() { "(empty)".to_owned() } else { ctx.to_text() };
        render(
            &self.prompts.guide,
            &[
                ("question", &task.question),
                ("context", &memory),
                ("grammar", DSL_GRAMMAR),
                ("examples", GUIDE_EXAMPLES),
                ("processes", &describe_processes(&self.registry)),
                ("slot_instructions", &slot_text),
            ],
        )
    }

    /// Generates `k` candidates, one independent guide conversation each.
    pub fn guide_generate(&self, task: &TaskInstance, ctx: &Context, k: usize) -> Vec<(Program, GuideRecord)> {
        assert!(k >= 1, "k must be at least 1");
        let slot = |s: usize| self.guide_slot(task, ctx, s, k);
        if self.concurrent() {
            use rayon::prelude::*;
            (1..=k).into_par_iter().map(slot).collect()
        } else {
            (1..=k).map(slot).collect()
        }
    }

    fn guide_slot(&self, task: &TaskInstance, ctx: &Context, slot: usize, k: usize) -> (Program, GuideRecord) {
        let names = self.registry.names();
        let partition = format!("guide/{}/{slot}", task.id);
        let mut messages = vec![ChatMessage::user(self.guide_prompt(task, ctx, slot, k))];
        let mut cost = CostLedger::zero();
        let mut attempts = Vec::new();
        for attempt in 0..=self.config.guide_retries {
            let seed = derive_seed(self.config.seed, &["guide", &task.id, &slot.to_string(), &attempt.to_string()]);
            let reply = match self.system_call(
                &messages,
                &self.config.guide_params,
                &partition,
                seed,
                GUIDE_PROCESS,
                &mut cost,
            ) {
                Ok(r) => r,
                Err(e) => {
                    attempts.push(GuideAttempt { reply: None, error: Some(e.to_string()) });
                    continue;
                }
            };
            match canonical_strategy(&extract_strategy(&reply), &names) {
                Ok(text) => {
                    attempts.push(GuideAttempt { reply: Some(reply), error: None });
                    let program = parse_strategy(&text).expect("canonical text parses");
                    return (program, GuideRecord { slot, strategy: text, attempts, fell_back: false, cost });
                }
                Err(e) => {
                    log::warn!("guide slot {slot} for {}: unusable strategy: {e}", task.id);
                    messages.push(ChatMessage::assistant(reply.clone()));
                    messages.push(ChatMessage::user(format!(
                        "That strategy was rejected: {e}\nReply with a corrected strategy in one fenced code block."
                    )));
                    attempts.push(GuideAttempt { reply: Some(reply), error: Some(e) });
                }
            }
        }
        log::warn!("guide slot {slot} for {}: falling back to codeact", task.id);
        let program = build_with_prelude(&BuiltinSpec::new(BuiltinName::Codeact)).expect("builtin is valid");
        let strategy = crate::lang::pretty_print(&program);
        (program, GuideRecord { slot, strategy, attempts, fell_back: true, cost })
    }
}
