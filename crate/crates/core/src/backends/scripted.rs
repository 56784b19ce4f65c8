//! Deterministic backend replaying prerecorded replies.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Completion, CompletionRequest, PricingTable};

/// One line of a script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScriptEntry {
    #[serde(default)]
    pub partition: String,
    pub text: String,
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
}

#[derive(Debug, Default)]
struct Queue {
    entries: Vec<Completion>,
    cursor: AtomicUsize,
}

/// Replays replies from per-partition queues.
///
/// A request labelled `a/b/c` is served from the queue `a/b/c` if one
/// exists, else `a/b`, else `a`, else the default queue `""`. Each entry
/// is served at most once.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queues: BTreeMap<String, Queue>,
    pricing: PricingTable,
}

impl ScriptedBackend {
    pub fn new(pricing: PricingTable) -> Self {
        ScriptedBackend { queues: BTreeMap::new(), pricing }
    }

    /// A backend with a single default queue of `(text, input, output)`.
    pub fn from_replies<S: Into<String>>(
        replies: impl IntoIterator<Item = (S, u64, u64)>,
        pricing: PricingTable,
    ) -> Self {
        let mut b = ScriptedBackend::new(pricing);
        for (text, i, o) in replies {
            b.push("", Completion::new(text, i, o));
        }
        b
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ScriptEntry>, pricing: PricingTable) -> Self {
        let mut b = ScriptedBackend::new(pricing);
        for e in entries {
            b.push(&e.partition, Completion::new(e.text, e.input_tokens, e.output_tokens));
        }
        b
    }

    pub fn push(&mut self, partition: &str, reply: Completion) -> &mut Self {
        self.queues.entry(partition.to_owned()).or_default().entries.push(reply);
        self
    }

    pub fn partitions(&self) -> impl Iterator<Item = &str> {
        self.queues.keys().map(String::as_str)
    }

    /// Entries not yet served, over all queues.
    pub fn remaining(&self) -> usize {
        self.queues
            .values()
            .map(|q| q.entries.len().saturating_sub(q.cursor.load(Ordering::SeqCst)))
            .sum()
    }

    fn queue_for(&self, partition: &str) -> Option<(&str, &Queue)> {
        let mut label = partition;
        loop {
            if let Some((k, q)) = self.queues.get_key_value(label) {
                return Some((k.as_str(), q));
            }
            if label.is_empty() {
                return None;
            }
            label = label.rfind('/').map_or("", |i| &label[..i]);
        }
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        let Some((label, queue)) = self.queue_for(req.partition) else {
            return Err(BackendError::QueueExhausted(req.partition.to_owned()));
        };
        let len = queue.entries.len();
        let slot = queue
            .cursor
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |c| (c < len).then_some(c + 1))
            .map_err(|_| BackendError::QueueExhausted(label.to_owned()))?;
        Ok(queue.entries[slot].clone())
    }

    fn pricing(&self) -> PricingTable {
        self.pricing
    }

    fn is_order_sensitive(&self) -> bool {
        true
    }
}

/// Reads a JSONL script: one [`ScriptEntry`] per non-blank line.
pub fn load_script(path: &Path) -> Result<Vec<ScriptEntry>, String> {
    let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| format!("{}: {e}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ScriptEntry = serde_json::from_str(&line)
            .map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
        out.push(entry);
    }
    Ok(out)
}
