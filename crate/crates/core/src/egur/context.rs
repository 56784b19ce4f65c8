//! Between-episode memory: the strategy library and general notes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::lang::{parse_strategy, pretty_print, validate, Program};
use crate::processes::normalize_ws;
use crate::semantics::Usd;

pub const DEFAULT_MAX_ENTRIES: usize = 32;
pub const DEFAULT_MAX_NOTES: usize = 64;
const SIGNATURE_CHARS: usize = 160;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RetentionPolicy {
    pub max_entries: usize,
    pub max_notes: usize,
}

impl Default for RetentionPolicy {
    fn default() -> Self {
        RetentionPolicy { max_entries: DEFAULT_MAX_ENTRIES, max_notes: DEFAULT_MAX_NOTES }
    }
}

impl RetentionPolicy {
    pub fn new(max_entries: usize, max_notes: usize) -> Result<Self, String> {
        if max_entries == 0 || max_notes == 0 {
            return Err("retention limits must be at least 1".into());
        }
        Ok(RetentionPolicy { max_entries, max_notes })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntryStats {
    pub wins: u64,
    pub losses: u64,
    pub mean_cost: Usd,
}

impl EntryStats {
    pub fn win_rate(&self) -> f64 {
        let n = self.wins + self.losses;
        if n == 0 {
            0.0
        } else {
            self.wins as f64 / n as f64
        }
    }

    /// Folds in one more outcome.
    pub fn observe(&mut self, correct: bool, cost: Usd) {
        let n = self.wins + self.losses;
        let total = self.mean_cost.decimal() * Decimal::from(n) + cost.decimal();
        if correct {
            self.wins += 1;
        } else {
            self.losses += 1;
        }
        self.mean_cost = Usd::new((total / Decimal::from(n + 1)).round_dp(12));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LibraryEntry {
    pub id: u64,
    pub task_signature: String,
    /// Canonical DSL text.
    pub strategy_text: String,
    pub stats: EntryStats,
    pub created_episode: u64,
    pub last_used_episode: u64,
}

impl LibraryEntry {
    pub fn program(&self) -> Program {
        parse_strategy(&self.strategy_text).expect("library strategies are checked on insertion")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Note {
    pub id: u64,
    pub text: String,
    pub created_episode: u64,
    pub access_count: u64,
    pub last_accessed: u64,
}

/// Strategy library plus general notes. Ids are unique across both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Context {
    pub library: Vec<LibraryEntry>,
    pub notes: Vec<Note>,
    pub episode_count: u64,
    pub next_id: u64,
    pub policy: RetentionPolicy,
}

impl Default for Context {
    fn default() -> Self {
        Context::new(RetentionPolicy::default())
    }
}

/// Library-match key of a question: its task type plus the first 160
/// whitespace-normalized characters.
pub fn task_signature(task_type: &str, question: &str) -> String {
    let text: String = normalize_ws(question).chars().take(SIGNATURE_CHARS).collect();
    format!("[{task_type}] {text}")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContextError {
    #[error("context line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("context sidecar: {0}")]
    Sidecar(String),
    #[error("memory entry {id}: {message}")]
    Strategy { id: u64, message: String },
}

/// Checks a strategy parses and validates; returns its canonical text.
pub fn canonical_strategy(text: &str, registry: &std::collections::BTreeSet<String>) -> Result<String, String> {
    let p = parse_strategy(text).map_err(|e| e.to_string())?;
    let diags = validate(&p, registry);
    if let Some(d) = diags.first() {
        return Err(d.to_string());
    }
    Ok(pretty_print(&p))
}

impl Context {
    pub fn new(policy: RetentionPolicy) -> Self {
        Context { library: Vec::new(), notes: Vec::new(), episode_count: 0, next_id: 1, policy }
    }

    pub fn is_empty(&self) -> bool {
        self.library.is_empty() && self.notes.is_empty()
    }

    fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn add_note(&mut self, text: &str) -> u64 {
        let id = self.take_id();
        let ep = self.episode_count;
        self.notes.push(Note { id, text: text.trim().to_owned(), created_episode: ep, access_count: 0, last_accessed: ep });
        id
    }

    /// Adds a library entry for an already canonical strategy, or merges
    /// `stats` into an identical existing entry.
    pub fn add_entry(&mut self, signature: &str, strategy_text: &str, stats: EntryStats) -> u64 {
        let ep = self.episode_count;
        if let Some(e) =
            self.library.iter_mut().find(|e| e.task_signature == signature && e.strategy_text == strategy_text)
        {
            let n_old = e.stats.wins + e.stats.losses;
            let n_new = stats.wins + stats.losses;
            let total = e.stats.mean_cost.decimal() * Decimal::from(n_old)
                + stats.mean_cost.decimal() * Decimal::from(n_new);
            e.stats.wins += stats.wins;
            e.stats.losses += stats.losses;
            let n = (n_old + n_new).max(1);
            e.stats.mean_cost = Usd::new((total / Decimal::from(n)).round_dp(12));
            e.last_used_episode = ep;
            return e.id;
        }
        let id = self.take_id();
        self.library.push(LibraryEntry {
            id,
            task_signature: signature.to_owned(),
            strategy_text: strategy_text.to_owned(),
            stats,
            created_episode: ep,
            last_used_episode: ep,
        });
        id
    }

    pub fn remove_note(&mut self, id: u64) -> bool {
        let before = self.notes.len();
        self.notes.retain(|n| n.id != id);
        self.notes.len() != before
    }

    pub fn remove_entry(&mut self, id: u64) -> bool {
        let before = self.library.len();
        self.library.retain(|e| e.id != id);
        self.library.len() != before
    }

    /// Evicts until both lists fit the policy. Notes go least recently
    /// accessed first, then least accessed; entries least recently used
    /// first, then lowest win rate. Ties go to the older id.
    pub fn enforce_retention(&mut self) {
        while self.notes.len() > self.policy.max_notes {
            let victim = self
                .notes
                .iter()
                .min_by_key(|n| (n.last_accessed, n.access_count, n.id))
                .map(|n| n.id)
                .expect("non-empty");
            self.remove_note(victim);
        }
        while self.library.len() > self.policy.max_entries {
            let victim = self
                .library
                .iter()
                .min_by(|a, b| {
                    a.last_used_episode
                        .cmp(&b.last_used_episode)
                        .then(a.stats.win_rate().total_cmp(&b.stats.win_rate()))
                        .then(a.id.cmp(&b.id))
                })
                .map(|e| e.id)
                .expect("non-empty");
            self.remove_entry(victim);
        }
    }

    pub fn within_bounds(&self) -> bool {
        self.notes.len() <= self.policy.max_notes && self.library.len() <= self.policy.max_entries
    }

    /// Human-readable form: one `<memory_entry-N>` block per note or
    /// library entry, in id order.
    pub fn to_text(&self) -> String {
        let mut blocks: Vec<(u64, String)> = Vec::new();
        for n in &self.notes {
            blocks.push((n.id, format!("{}\n", n.text)));
        }
        for e in &self.library {
            blocks.push((
                e.id,
                format!("Task: {}\nBest Strategy:\n<strategy>\n{}\n</strategy>\n", e.task_signature, e.strategy_text),
            ));
        }
        blocks.sort_by_key(|(id, _)| *id);
        let mut out = String::new();
        for (i, (id, body)) in blocks.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = write!(out, "<memory_entry-{id}>\n{body}</memory_entry-{id}>\n");
        }
        out
    }

    /// Statistics and counters that the text form does not carry.
    pub fn to_sidecar(&self) -> String {
        let sidecar = Sidecar {
            v: 1,
            episode_count: self.episode_count,
            next_id: self.next_id,
            policy: self.policy,
            notes: self
                .notes
                .iter()
                .map(|n| NoteMeta {
                    id: n.id,
                    created_episode: n.created_episode,
                    access_count: n.access_count,
                    last_accessed: n.last_accessed,
                })
                .collect(),
            library: self
                .library
                .iter()
                .map(|e| EntryMeta {
                    id: e.id,
                    stats: e.stats.clone(),
                    created_episode: e.created_episode,
                    last_used_episode: e.last_used_episode,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        s.push('\n');
        s
    }

    /// Rebuilds a context from its text form and optional sidecar. Every
    /// strategy must parse and validate against `registry`.
    pub fn from_text(
        text: &str,
        sidecar: Option<&str>,
        registry: &std::collections::BTreeSet<String>,
    ) -> Result<Context, ContextError> {
        let meta: Option<Sidecar> = sidecar
            .map(|s| serde_json::from_str(s).map_err(|e| ContextError::Sidecar(e.to_string())))
            .transpose()?;
        let note_meta: BTreeMap<u64, NoteMeta> =
            meta.iter().flat_map(|m| m.notes.iter().map(|n| (n.id, n.clone()))).collect();
        let entry_meta: BTreeMap<u64, EntryMeta> =
            meta.iter().flat_map(|m| m.library.iter().map(|e| (e.id, e.clone()))).collect();

        let mut ctx = Context::new(meta.as_ref().map(|m| m.policy).unwrap_or_default());
        let mut max_id = 0;
        for (id, body, line) in split_blocks(text)? {
            max_id = max_id.max(id);
            let is_entry = match (note_meta.contains_key(&id), entry_meta.contains_key(&id)) {
                (true, _) => false,
                (_, true) => true,
                _ => body.starts_with("Task: "),
            };
            if is_entry {
                let (sig, strat) = parse_entry_body(&body)
                    .ok_or_else(|| ContextError::Format { line, message: format!("malformed library entry {id}") })?;
                let strategy_text = canonical_strategy(&strat, registry)
                    .map_err(|message| ContextError::Strategy { id, message })?;
                let m = entry_meta.get(&id);
                ctx.library.push(LibraryEntry {
                    id,
                    task_signature: sig,
                    strategy_text,
                    stats: m.map(|m| m.stats.clone()).unwrap_or(EntryStats { wins: 1, losses: 0, mean_cost: Usd::ZERO }),
                    created_episode: m.map_or(0, |m| m.created_episode),
                    last_used_episode: m.map_or(0, |m| m.last_used_episode),
                });
            } else {
                let text = body.trim().to_owned();
                if text.is_empty() {
                    return Err(ContextError::Format { line, message: format!("note {id} is empty") });
                }
                let m = note_meta.get(&id);
                ctx.notes.push(Note {
                    id,
                    text,
                    created_episode: m.map_or(0, |m| m.created_episode),
                    access_count: m.map_or(0, |m| m.access_count),
                    last_accessed: m.map_or(0, |m| m.last_accessed),
                });
            }
        }
        ctx.episode_count = meta.as_ref().map_or(0, |m| m.episode_count);
        ctx.next_id = meta.as_ref().map_or(max_id + 1, |m| m.next_id.max(max_id + 1));
        Ok(ctx)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct NoteMeta {
    id: u64,
    created_episode: u64,
    access_count: u64,
    last_accessed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct EntryMeta {
    id: u64,
    stats: EntryStats,
    created_episode: u64,
    last_used_episode: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Sidecar {
    v: u32,
    episode_count: u64,
    next_id: u64,
    policy: RetentionPolicy,
    notes: Vec<NoteMeta>,
    library: Vec<EntryMeta>,
}

fn split_blocks(text: &str) -> Result<Vec<(u64, String, usize)>, ContextError> {
    let mut out = Vec::new();
    let mut open: Option<(u64, usize, Vec<&str>)> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let t = line.trim();
        match &mut open {
            None => {
                if t.is_empty() {
                    continue;
                }
                let id = t
                    .strip_prefix("<memory_entry-")
                    .and_then(|r| r.strip_suffix('>'))
                    .and_then(|n| n.parse::<u64>().ok())
                    .ok_or_else(|| ContextError::Format {
                        line: line_no,
                        message: format!("expected `<memory_entry-N>`, found `{t}`"),
                    })?;
                if out.iter().any(|(seen, _, _)| *seen == id) {
                    return Err(ContextError::Format { line: line_no, message: format!("duplicate entry {id}") });
                }
                open = Some((id, line_no, Vec::new()));
            }
            Some((id, start, body)) => {
                if t == format!("</memory_entry-{id}>") {
                    out.push((*id, body.join("\n"), *start));
                    open = None;
                } else {
                    body.push(line);
                }
            }
        }
    }
    if let Some((id, start, _)) = open {
        return Err(ContextError::Format { line: start, message: format!("entry {id} is never closed") });
    }
    Ok(out)
}

fn parse_entry_body(body: &str) -> Option<(String, String)> {
    let rest = body.strip_prefix("Task: ")?;
    let (sig, rest) = rest.split_once('\n')?;
    let rest = rest.strip_prefix("Best Strategy:\n")?;
    let inner = rest.trim().strip_prefix("<strategy>")?.strip_suffix("</strategy>")?;
    Some((sig.trim().to_owned(), inner.trim().to_owned()))
}
