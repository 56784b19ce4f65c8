//! Text helpers: answer extraction, code fences and voting.

use crate::lang::Value;

const ANSWER_MARKER: &str = "FINAL ANSWER:";

/// Text after the last line that starts with `FINAL ANSWER:`, trimmed.
/// Returns `None` when there is no such line or the answer is blank.
pub fn extract_final_answer(text: &str) -> Option<String> {
    text.lines()
        .filter_map(|line| line.strip_prefix(ANSWER_MARKER))
        .last()
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(str::to_owned)
}

/// The answer a strategy output stands for: the final-answer text when
/// marked, otherwise the whole output trimmed.
pub fn answer_text(v: &Value) -> String {
    let text = v.render_plain();
    extract_final_answer(&text).unwrap_or_else(|| text.trim().to_owned())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeBlocks {
    pub blocks: Vec<String>,
    /// The last fence was never closed; its block runs to the end.
    pub unterminated: bool,
}

/// Bodies of the ```-fenced blocks in `text`, in order. The opening fence
/// may carry a language tag.
pub fn extract_code_blocks(text: &str) -> CodeBlocks {
    let mut out = CodeBlocks::default();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        match &mut current {
            None => {
                if trimmed.starts_with("```") {
                    current = Some(Vec::new());
                }
            }
            Some(body) => {
                if trimmed.trim_end() == "```" {
                    out.blocks.push(body.join("\n"));
                    current = None;
                } else {
                    body.push(line);
                }
            }
        }
    }
    if let Some(body) = current {
        log::warn!("unterminated code fence");
        out.blocks.push(body.join("\n"));
        out.unterminated = true;
    }
    out
}

/// Collapses runs of whitespace to one space and trims.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace-collapsed, case-folded form used for exact matching.
pub fn normalize_answer(s: &str) -> String {
    normalize_ws(&s.to_lowercase())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("majority vote over no answers")]
pub struct EmptyVote;

/// Most frequent answer after whitespace normalization. Ties go to the
/// answer seen first.
pub fn majority_vote(answers: &[String]) -> Result<String, EmptyVote> {
    let mut tally: Vec<(String, usize)> = Vec::new();
    for a in answers {
        let key = normalize_ws(a);
        match tally.iter_mut().find(|(k, _)| *k == key) {
            Some((_, n)) => *n += 1,
            None => tally.push((key, 1)),
        }
    }
    let mut best: Option<&(String, usize)> = None;
    for t in &tally {
        if best.is_none_or(|b| t.1 > b.1) {
            best = Some(t);
        }
    }
    best.map(|(k, _)| k.clone()).ok_or(EmptyVote)
}
