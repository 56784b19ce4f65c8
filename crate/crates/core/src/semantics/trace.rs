//! Trace events, JSON Lines export and transcript replay.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cost::{cost_of_trace, CostLedger};
use crate::lang::Value;

/// Version tag written on every exported line.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// Name of the synthetic event recorded for a parallel fork.
pub const PAR_EVENT: &str = "par";

/// Record of one process invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceEvent {
    pub process_name: String,
    pub input_digest: String,
    pub output_digest: String,
    pub cost: CostLedger,
    #[serde(with = "duration_micros", rename = "wallClockMicros")]
    pub wall_clock: Duration,
    /// Branch events of a fork: the left branch's events first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TraceEvent>,
    /// How many of `children` came from the left branch.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub left_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

mod duration_micros {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros().min(u64::MAX as u128) as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}

impl TraceEvent {
    pub fn is_fork(&self) -> bool {
        self.process_name == PAR_EVENT
    }

    pub fn left_children(&self) -> &[TraceEvent] {
        &self.children[..self.left_len.min(self.children.len())]
    }

    pub fn right_children(&self) -> &[TraceEvent] {
        &self.children[self.left_len.min(self.children.len())..]
    }

    /// The event with its wall-clock reading zeroed, for comparisons that
    /// must ignore timing.
    pub fn without_timing(&self) -> TraceEvent {
        TraceEvent {
            wall_clock: Duration::ZERO,
            children: self.children.iter().map(TraceEvent::without_timing).collect(),
            ..self.clone()
        }
    }

    /// Number of events in this subtree, the event itself included.
    pub fn count(&self) -> usize {
        1 + self.children.iter().map(TraceEvent::count).sum::<usize>()
    }
}

/// Hex content hash of a value's literal rendering.
pub fn digest(v: &Value) -> String {
    digest_str(&v.to_string())
}

pub fn digest_str(s: &str) -> String {
    let hash = Sha256::digest(s.as_bytes());
    hex::encode(&hash[..8])
}

#[derive(Serialize, Deserialize)]
struct EventLine<'a> {
    v: u32,
    #[serde(flatten)]
    event: std::borrow::Cow<'a, TraceEvent>,
}

#[derive(Serialize, Deserialize)]
struct TrailerLine {
    v: u32,
    total: CostLedger,
}

/// Writes one line per top-level event followed by a trailer holding the
/// total ledger.
pub fn write_jsonl(trace: &[TraceEvent], mut w: impl Write) -> io::Result<()> {
    for ev in trace {
        let line = EventLine { v: TRACE_SCHEMA_VERSION, event: std::borrow::Cow::Borrowed(ev) };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    let trailer = TrailerLine { v: TRACE_SCHEMA_VERSION, total: cost_of_trace(trace) };
    serde_json::to_writer(&mut w, &trailer)?;
    w.write_all(b"\n")
}

pub fn to_jsonl(trace: &[TraceEvent]) -> String {
    let mut buf = Vec::new();
    write_jsonl(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

#[derive(Debug, thiserror::Error)]
pub enum TraceReadError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unsupported trace schema version {version}")]
    Version { line: usize, version: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads a trace written by [`write_jsonl`]. The trailer is optional; when
/// present it must match the events.
pub fn read_jsonl(r: impl BufRead) -> Result<Vec<TraceEvent>, TraceReadError> {
    let mut events = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| TraceReadError::Malformed { line: line_no, message: e.to_string() })?;
        let version = raw.get("v").and_then(serde_json::Value::as_u64).unwrap_or(0);
        if version != TRACE_SCHEMA_VERSION as u64 {
            return Err(TraceReadError::Version { line: line_no, version });
        }
        if raw.get("total").is_some() {
            let trailer: TrailerLine = serde_json::from_value(raw)
                .map_err(|e| TraceReadError::Malformed { line: line_no, message: e.to_string() })?;
            if trailer.total != cost_of_trace(&events) {
                return Err(TraceReadError::Malformed {
                    line: line_no,
                    message: "trailer total does not match the events".into(),
                });
            }
            continue;
        }
        let ev: EventLine<'static> = serde_json::from_value(raw)
            .map_err(|e| TraceReadError::Malformed { line: line_no, message: e.to_string() })?;
        events.push(ev.event.into_owned());
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("payload missing for event {position} ({process}): record with payload retention enabled")]
pub struct ReplayError {
    pub position: String,
    pub process: String,
}

/// Renders a trace as a transcript. Output depends only on the events'
/// names, digests, payloads and costs, never on timing.
pub fn replay_trace(trace: &[TraceEvent]) -> Result<String, ReplayError> {
    let mut out = String::new();
    render_events(trace, "", 0, &mut out)?;
    Ok(out)
}

fn render_events(
    events: &[TraceEvent],
    prefix: &str,
    indent: usize,
    out: &mut String,
) -> Result<(), ReplayError> {
    let pad = "  ".repeat(indent);
    for (i, ev) in events.iter().enumerate() {
        let position = format!("{prefix}{}", i + 1);
        if ev.is_fork() {
            let _ = writeln!(out, "{pad}[{position}] fork  cost=${}", ev.cost.usd);
            let _ = writeln!(out, "{pad}  left:");
            render_events(ev.left_children(), &format!("{position}.L"), indent + 2, out)?;
            let _ = writeln!(out, "{pad}  right:");
            render_events(ev.right_children(), &format!("{position}.R"), indent + 2, out)?;
            continue;
        }
        let (Some(input), Some(output)) = (&ev.input, &ev.output) else {
            return Err(ReplayError { position, process: ev.process_name.clone() });
        };
        let _ = writeln!(
            out,
            "{pad}[{position}] {}  cost=${} tokens={}/{}",
            ev.process_name, ev.cost.usd, ev.cost.input_tokens, ev.cost.output_tokens
        );
        for line in input.lines() {
            let _ = writeln!(out, "{pad}  > {line}");
        }
        for line in output.lines() {
            let _ = writeln!(out, "{pad}  < {line}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(name: &str, input: &str, output: &str) -> TraceEvent {
        TraceEvent {
            process_name: name.into(),
            input_digest: digest_str(input),
            output_digest: digest_str(output),
            cost: CostLedger::zero(),
            wall_clock: Duration::from_micros(17),
            children: vec![],
            left_len: 0,
            input: Some(input.into()),
            output: Some(output.into()),
        }
    }

    #[test]
    fn empty_trace_replays_to_empty_text() {
        assert_eq!(replay_trace(&[]).unwrap(), "");
    }

    #[test]
    fn sequential_events_render_in_order() {
        let t = vec![ev("A", "q", "r1"), ev("B", "r1", "r2")];
        let text = replay_trace(&t).unwrap();
        let a = text.find("[1] A").unwrap();
        let b = text.find("[2] B").unwrap();
        assert!(a < b);
        assert_eq!(text.matches('[').count(), 2);
    }

    #[test]
    fn fork_renders_left_then_right() {
        let fork = TraceEvent {
            process_name: PAR_EVENT.into(),
            children: vec![ev("L", "x", "l"), ev("R", "x", "r")],
            left_len: 1,
            input: None,
            output: None,
            ..ev("par", "x", "y")
        };
        let golden = "\
[1] fork  cost=$0
  left:
    [1.L1] L  cost=$0 tokens=0/0
      > x
      < l
  right:
    [1.R1] R  cost=$0 tokens=0/0
      > x
      < r
";
        assert_eq!(replay_trace(&[fork]).unwrap(), golden);
    }

    #[test]
    fn missing_payload_is_an_error() {
        let mut e = ev("A", "q", "r");
        e.output = None;
        assert!(replay_trace(&[e]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let mut a = ev("A", "q", "r");
        a.cost = CostLedger::charge("A", 3, 4, "0.25".parse().unwrap());
        let t = vec![a, ev("B", "r", "s")];
        let text = to_jsonl(&t);
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.starts_with("{\"v\":1")));
        let back = read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, t);
    }
}
