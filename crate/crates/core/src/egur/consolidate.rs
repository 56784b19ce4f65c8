//! Turning experiences into context edits.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::edits::{apply_edits, parse_edit_script, Outcome};
use super::episode::Experience;
use super::prompts::render;
use super::{derive_seed, task_signature, Context, Egur};
use crate::bench::TaskInstance;
use crate::semantics::{ChatMessage, CostLedger};

pub const CONSOLIDATOR_PROCESS: &str = "Consolidator";
const MAX_STEPS_SHOWN: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConsolidationRecord {
    pub task_id: String,
    /// Episode number after this update.
    pub episode: u64,
    pub reply: Option<String>,
    /// Why the whole script was rejected, if it was.
    pub rejected: Option<String>,
    pub applied: Vec<String>,
    pub skipped: Vec<String>,
    pub cost: CostLedger,
}

/// The attempts section of the consolidator prompt.
pub fn render_experiences(experiences: &[Experience]) -> String {
    let mut out = String::new();
    for e in experiences {
        let role = if e.slot == 1 { " (returned answer)" } else { "" };
        let _ = writeln!(out, "### Attempt {}{role}", e.slot);
        let _ = writeln!(out, "Strategy:\n```\n{}\n```", e.strategy);
        let answer = if e.answer.is_empty() { "(none)" } else { e.answer.as_str() };
        let _ = writeln!(out, "Answer: {answer}");
        let _ = writeln!(out, "Verdict: {}", if e.feedback.correct { "correct" } else { "incorrect" });
        if !e.feedback.detail.is_empty() {
            let _ = writeln!(out, "Verifier detail: {}", e.feedback.detail);
        }
        if let Some(err) = &e.error {
            let _ = writeln!(out, "Error: {err}");
        }
        let _ = writeln!(
            out,
            "Cost: ${} ({} input tokens, {} output tokens)",
            e.cost.usd, e.cost.input_tokens, e.cost.output_tokens
        );
        let steps: Vec<&str> = e.trace.iter().map(|t| t.process_name.as_str()).collect();
        let shown = steps.iter().take(MAX_STEPS_SHOWN).copied().collect::<Vec<_>>().join(" -> ");
        let more = if steps.len() > MAX_STEPS_SHOWN { format!(" ... ({} steps)", steps.len()) } else { String::new() };
        let _ = writeln!(out, "Steps: {shown}{more}\n");
    }
    let mut correct: Vec<&Experience> = experiences.iter().filter(|e| e.feedback.correct).collect();
    correct.sort_by(|a, b| a.cost.usd.cmp(&b.cost.usd).then(a.slot.cmp(&b.slot)));
    if correct.is_empty() {
        out.push_str("No attempt was correct.\n");
    } else {
        let ranking: Vec<String> = correct.iter().map(|e| format!("attempt {} (${})", e.slot, e.cost.usd)).collect();
        let _ = writeln!(out, "Correct attempts, cheapest first: {}", ranking.join(", "));
    }
    out
}

impl Egur {
    pub fn consolidator_prompt(&self, task: &TaskInstance, experiences: &[Experience], ctx: &Context) -> String {
        let memory = if ctx.is_empty() { "(empty)".to_owned() } else { ctx.to_text() };
        render(
            &self.prompts.consolidator,
            &[("question", &task.question), ("context", &memory), ("experiences", &render_experiences(experiences))],
        )
    }

    /// Updates `ctx` from one question's experiences. `seen` holds the ids
    /// that were in the context the guide saw; when some experience was
    /// correct, those notes count as accessed.
    ///
    /// The episode counter always advances. A script that fails to parse
    /// (or a failed consolidator call) leaves everything else unchanged.
    pub fn consolidate(
        &self,
        task: &TaskInstance,
        experiences: &[Experience],
        ctx: &mut Context,
        seen: &BTreeSet<u64>,
    ) -> ConsolidationRecord {
        assert!(!experiences.is_empty(), "consolidation needs at least one experience");
        let prompt = self.consolidator_prompt(task, experiences, ctx);
        ctx.episode_count += 1;
        let episode = ctx.episode_count;
        let mut record = ConsolidationRecord {
            task_id: task.id.clone(),
            episode,
            reply: None,
            rejected: None,
            applied: Vec::new(),
            skipped: Vec::new(),
            cost: CostLedger::zero(),
        };
        let seed = derive_seed(self.config.seed, &["consolidate", &task.id]);
        let reply = match self.system_call(
            &[ChatMessage::user(prompt)],
            &self.config.consolidator_params,
            &format!("consolidate/{}", task.id),
            seed,
            CONSOLIDATOR_PROCESS,
            &mut record.cost,
        ) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("consolidator call for {} failed: {e}", task.id);
                record.rejected = Some(e.to_string());
                return record;
            }
        };
        record.reply = Some(reply.clone());
        let edits = match parse_edit_script(&reply) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("consolidator script for {} rejected: {e}", task.id);
                record.rejected = Some(e.to_string());
                return record;
            }
        };
        let outcomes: Vec<Outcome> = experiences
            .iter()
            .map(|e| Outcome { strategy_text: e.strategy.clone(), correct: e.feedback.correct, usd: e.cost.usd })
            .collect();
        let signature = task_signature(task.task_type.as_str(), &task.question);
        let stored_before: BTreeSet<u64> = ctx.library.iter().map(|e| e.id).collect();
        let touched_before: Vec<(u64, u64)> = ctx.library.iter().map(|e| (e.id, e.stats.wins + e.stats.losses)).collect();
        let report = apply_edits(ctx, &edits, &signature, &outcomes, &self.registry.names());
        record.applied = report.applied;
        record.skipped = report.skipped;

        // Entries the script did not just add or merge into pick up this
        // episode's outcomes for their strategy.
        for entry in ctx.library.iter_mut() {
            let merged = !stored_before.contains(&entry.id)
                || touched_before.iter().any(|(id, n)| *id == entry.id && *n != entry.stats.wins + entry.stats.losses);
            if merged {
                continue;
            }
            let mut used = false;
            for o in outcomes.iter().filter(|o| o.strategy_text == entry.strategy_text) {
                entry.stats.observe(o.correct, o.usd);
                used = true;
            }
            if used {
                entry.last_used_episode = episode;
            }
        }
        if experiences.iter().any(|e| e.feedback.correct) {
            for note in ctx.notes.iter_mut().filter(|n| seen.contains(&n.id)) {
                note.access_count += 1;
                note.last_accessed = episode;
            }
        }
        ctx.enforce_retention();
        record
    }
}
