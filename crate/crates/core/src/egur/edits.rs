//! Consolidator edit scripts.
//!
//! ```text
//! ADD NOTE: <text>
//! DEL NOTE <id>
//! ADD STRATEGY <signature>:
//! ```
//! <DSL source>
//! ```
//! DEL STRATEGY <id>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. When the reply
//! contains an `<edits>` ... `</edits>` block only its inside is read.

use std::collections::BTreeSet;

use super::context::{canonical_strategy, Context, EntryStats};
use crate::semantics::Usd;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Edit {
    AddNote(String),
    DelNote(u64),
    /// A signature of `auto` (or empty) means the episode's own signature.
    AddStrategy { signature: String, source: String },
    DelStrategy(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("edit script line {line}: {message}")]
pub struct EditParseError {
    pub line: usize,
    pub message: String,
}

fn body_of(reply: &str) -> (&str, usize) {
    if let Some(start) = reply.find("<edits>") {
        let inner_start = start + "<edits>".len();
        let inner = &reply[inner_start..];
        let inner = inner.find("</edits>").map_or(inner, |end| &inner[..end]);
        let offset = reply[..inner_start].matches('\n').count();
        return (inner, offset);
    }
    (reply, 0)
}

/// Parses a whole script. Any malformed directive rejects the script.
pub fn parse_edit_script(reply: &str) -> Result<Vec<Edit>, EditParseError> {
    let (body, offset) = body_of(reply);
    let lines: Vec<&str> = body.lines().collect();
    let mut edits = Vec::new();
    let mut i = 0;
    let err = |i: usize, message: String| EditParseError { line: i + 1 + offset, message };
    while i < lines.len() {
        let t = lines[i].trim();
        if t.is_empty() || t.starts_with('#') {
            i += 1;
            continue;
        }
        if let Some(text) = t.strip_prefix("ADD NOTE:") {
            let text = text.trim();
            if text.is_empty() {
                return Err(err(i, "ADD NOTE needs text".into()));
            }
            edits.push(Edit::AddNote(text.to_owned()));
        } else if let Some(rest) = t.strip_prefix("DEL NOTE") {
            edits.push(Edit::DelNote(parse_id(rest).ok_or_else(|| err(i, format!("bad note id in `{t}`")))?));
        } else if let Some(rest) = t.strip_prefix("DEL STRATEGY") {
            edits.push(Edit::DelStrategy(parse_id(rest).ok_or_else(|| err(i, format!("bad strategy id in `{t}`")))?));
        } else if let Some(rest) = t.strip_prefix("ADD STRATEGY") {
            let signature = rest
                .strip_suffix(':')
                .ok_or_else(|| err(i, "ADD STRATEGY line must end with `:`".into()))?
                .trim()
                .to_owned();
            let open = i + 1;
            if open >= lines.len() || !lines[open].trim_start().starts_with("```") {
                return Err(err(i, "ADD STRATEGY must be followed by a fenced block".into()));
            }
            let close = (open + 1..lines.len())
                .find(|&j| lines[j].trim() == "```")
                .ok_or_else(|| err(open, "unterminated strategy block".into()))?;
            let source = lines[open + 1..close].join("\n").trim().to_owned();
            if source.is_empty() {
                return Err(err(open, "empty strategy block".into()));
            }
            edits.push(Edit::AddStrategy { signature, source });
            i = close;
        } else {
            return Err(err(i, format!("unrecognized directive `{t}`")));
        }
        i += 1;
    }
    Ok(edits)
}

fn parse_id(rest: &str) -> Option<u64> {
    let rest = rest.trim();
    rest.strip_prefix('#').unwrap_or(rest).parse().ok()
}

/// One executed strategy, as far as library insertion needs to know.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub strategy_text: String,
    pub correct: bool,
    pub usd: Usd,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ApplyReport {
    pub applied: Vec<String>,
    pub skipped: Vec<String>,
}

/// Applies edits in order. A directive that does not make sense for the
/// current context is skipped and reported; the rest still apply.
///
/// A strategy is only stored when it matches an executed candidate with at
/// least one correct outcome; its stats come from those outcomes.
pub fn apply_edits(
    ctx: &mut Context,
    edits: &[Edit],
    default_signature: &str,
    outcomes: &[Outcome],
    registry: &BTreeSet<String>,
) -> ApplyReport {
    let mut report = ApplyReport::default();
    for edit in edits {
        let result = match edit {
            Edit::AddNote(text) => {
                let id = ctx.add_note(text);
                Ok(format!("added note {id}"))
            }
            Edit::DelNote(id) => {
                if ctx.remove_note(*id) {
                    Ok(format!("deleted note {id}"))
                } else {
                    Err(format!("no note {id}"))
                }
            }
            Edit::DelStrategy(id) => {
                if ctx.remove_entry(*id) {
                    Ok(format!("deleted strategy {id}"))
                } else {
                    Err(format!("no strategy {id}"))
                }
            }
            Edit::AddStrategy { signature, source } => add_strategy(ctx, signature, source, default_signature, outcomes, registry),
        };
        match result {
            Ok(m) => report.applied.push(m),
            Err(m) => {
                log::warn!("skipping edit: {m}");
                report.skipped.push(m)
            }
        }
    }
    report
}

fn add_strategy(
    ctx: &mut Context,
    signature: &str,
    source: &str,
    default_signature: &str,
    outcomes: &[Outcome],
    registry: &BTreeSet<String>,
) -> Result<String, String> {
    let text = canonical_strategy(source, registry).map_err(|e| format!("strategy rejected: {e}"))?;
    let matching: Vec<&Outcome> = outcomes.iter().filter(|o| o.strategy_text == text).collect();
    if !matching.iter().any(|o| o.correct) {
        return Err("strategy rejected: no correct candidate ran it this episode".into());
    }
    let mut stats = EntryStats::default();
    for o in &matching {
        stats.observe(o.correct, o.usd);
    }
    let sig = if signature.is_empty() || signature.eq_ignore_ascii_case("auto") { default_signature } else { signature };
    let id = ctx.add_entry(sig, &text, stats);
    Ok(format!("stored strategy {id}"))
}
