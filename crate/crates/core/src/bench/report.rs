//! Prequential metrics and report files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::semantics::Usd;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleRecord {
    pub id: String,
    pub correct: bool,
    /// Strategy execution cost.
    pub usd_exec: Usd,
    /// Guide and consolidator cost.
    pub usd_system: Usd,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SampleRecord {
    pub fn new(id: impl Into<String>, correct: bool, usd_exec: Usd) -> Self {
        SampleRecord { id: id.into(), correct, usd_exec, usd_system: Usd::ZERO, error: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Checkpoint {
    pub fraction_seen: f64,
    pub held_out_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub per_sample: Vec<SampleRecord>,
    pub prequential_accuracy: f64,
    pub cumulative_cost_curve: Vec<Usd>,
    #[serde(default)]
    pub checkpoints: Vec<Checkpoint>,
}

/// Accuracy over the records (0 when empty) and the running sum of their
/// execution costs.
pub fn prequential_eval(records: Vec<SampleRecord>) -> EvalReport {
    let correct = records.iter().filter(|r| r.correct).count();
    let prequential_accuracy = if records.is_empty() { 0.0 } else { correct as f64 / records.len() as f64 };
    let mut running = Usd::ZERO;
    let cumulative_cost_curve = records
        .iter()
        .map(|r| {
            running += r.usd_exec;
            running
        })
        .collect();
    EvalReport { per_sample: records, prequential_accuracy, cumulative_cost_curve, checkpoints: Vec::new() }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn costs_csv(&self) -> String {
        let mut s = String::from("index,id,correct,usd_exec,usd_system,cumulative_usd_exec\n");
        for (i, (r, cum)) in self.per_sample.iter().zip(&self.cumulative_cost_curve).enumerate() {
            let _ = writeln!(s, "{},{},{},{},{},{}", i + 1, csv_field(&r.id), r.correct, r.usd_exec, r.usd_system, cum);
        }
        s
    }

    /// Mean execution cost per sample over `range`.
    pub fn mean_exec_cost(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let slice = self.per_sample.get(range)?;
        (!slice.is_empty()).then(|| slice.iter().map(|r| r.usd_exec.to_f64()).sum::<f64>() / slice.len() as f64)
    }

    pub fn accuracy(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let slice = self.per_sample.get(range)?;
        (!slice.is_empty()).then(|| slice.iter().filter(|r| r.correct).count() as f64 / slice.len() as f64)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Writes `report.json` and `costs.csv` into `dir`, creating it.
pub fn emit_report(r: &EvalReport, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), r.to_json())?;
    std::fs::write(dir.join("costs.csv"), r.costs_csv())
}
