//! Episodes and the continual-learning stream.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::consolidate::ConsolidationRecord;
use super::guide::GuideRecord;
use super::{derive_seed, Context, Egur};
use crate::bench::{prequential_eval, verify_output, Checkpoint, EvalReport, SampleRecord, TaskInstance};
use crate::lang::{Program, Value};
use crate::processes::BinaryVerdict;
use crate::semantics::{cost_of_trace, CostLedger, Interpreter, RunState, TraceEvent, Usd};

/// One executed candidate and its verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub task_id: String,
    pub question: String,
    /// 1-based candidate slot.
    pub slot: usize,
    /// Canonical strategy text.
    pub strategy: String,
    pub answer: String,
    pub trace: Vec<TraceEvent>,
    pub cost: CostLedger,
    pub feedback: BinaryVerdict,
    pub error: Option<String>,
}

/// An experience without its trace, for the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperienceLog {
    pub task_id: String,
    pub slot: usize,
    pub strategy: String,
    pub answer: String,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub cost: CostLedger,
    pub trace_events: usize,
}

impl Experience {
    pub fn log(&self) -> ExperienceLog {
        ExperienceLog {
            task_id: self.task_id.clone(),
            slot: self.slot,
            strategy: self.strategy.clone(),
            answer: self.answer.clone(),
            correct: self.feedback.correct,
            detail: self.feedback.detail.clone(),
            error: self.error.clone(),
            cost: self.cost.clone(),
            trace_events: self.trace.iter().map(TraceEvent::count).sum(),
        }
    }
}

/// Everything produced for one question before the context changes.
#[derive(Debug, Clone)]
pub struct AnswerPhase {
    /// The first candidate's answer.
    pub answer: String,
    pub correct: bool,
    pub experiences: Vec<Experience>,
    pub guide: Vec<GuideRecord>,
    /// Ids present in the context the guide saw.
    pub seen: BTreeSet<u64>,
}

impl AnswerPhase {
    pub fn exec_usd(&self) -> Usd {
        self.experiences.iter().map(|e| e.cost.usd).sum()
    }

    pub fn guide_usd(&self) -> Usd {
        self.guide.iter().map(|g| g.cost.usd).sum()
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    /// Position in the (possibly shuffled) stream.
    pub index: usize,
    pub task_id: String,
    pub phase: AnswerPhase,
    pub consolidation: ConsolidationRecord,
}

impl EpisodeRecord {
    pub fn system_usd(&self) -> Usd {
        self.phase.guide_usd() + self.consolidation.cost.usd
    }
}

/// One batch: the ids it answered, in the order they were consolidated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PhaseRecord {
    pub batch: usize,
    pub task_ids: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ContinualOutcome {
    pub report: EvalReport,
    pub context: Context,
    pub episodes: Vec<EpisodeRecord>,
    pub phases: Vec<PhaseRecord>,
}

const CHECKPOINT_FRACTIONS: [f64; 3] = [1.0 / 3.0, 2.0 / 3.0, 1.0];

impl Egur {
    /// Runs one candidate from a fresh state and verifies its output.
    pub fn execute_candidate(&self, task: &TaskInstance, slot: usize, program: &Program, strategy: &str) -> Experience {
        let seed = derive_seed(self.config.seed, &["exec", &task.id, &slot.to_string()]);
        let mut state = RunState::new(seed).with_partition(format!("exec/{}/{slot}", task.id));
        let interp = Interpreter::new(&self.registry)
            .with_budget(self.config.fix_budget)
            .with_parallel(self.concurrent());
        let result = interp.run(program, Value::Text(task.question.clone()), &mut state);
        let (answer, feedback, error) = match result {
            Ok(out) => {
                let (answer, verdict) = verify_output(task, &out);
                (answer, verdict, None)
            }
            Err(e) => {
                log::warn!("candidate {slot} for {} failed: {e}", task.id);
                (String::new(), BinaryVerdict::incorrect(format!("strategy failed: {e}")), Some(e.to_string()))
            }
        };
        let cost = cost_of_trace(&state.trace);
        Experience {
            task_id: task.id.clone(),
            question: task.question.clone(),
            slot,
            strategy: strategy.to_owned(),
            answer,
            trace: state.trace,
            cost,
            feedback,
            error,
        }
    }

    /// Generates, runs and verifies `k` candidates against a fixed context.
    pub fn answer(&self, task: &TaskInstance, ctx: &Context) -> AnswerPhase {
        let k = self.config.k;
        let candidates = self.guide_generate(task, ctx, k);
        let run = |(program, record): &(Program, GuideRecord)| {
            self.execute_candidate(task, record.slot, program, &record.strategy)
        };
        let experiences: Vec<Experience> = if self.concurrent() {
            use rayon::prelude::*;
            candidates.par_iter().map(run).collect()
        } else {
            candidates.iter().map(run).collect()
        };
        let first = &experiences[0];
        AnswerPhase {
            answer: first.answer.clone(),
            correct: first.feedback.correct,
            guide: candidates.into_iter().map(|(_, r)| r).collect(),
            seen: ctx.notes.iter().map(|n| n.id).chain(ctx.library.iter().map(|e| e.id)).collect(),
            experiences,
        }
    }

    /// One full episode: answer, then consolidate into `ctx`. Returns the
    /// first candidate's answer.
    pub fn episode(&self, task: &TaskInstance, ctx: &mut Context) -> (String, AnswerPhase, ConsolidationRecord) {
        let phase = self.answer(task, ctx);
        let record = self.consolidate(task, &phase.experiences, ctx, &phase.seen);
        (phase.answer.clone(), phase, record)
    }

    fn holdout_accuracy(&self, holdout: &[TaskInstance], ctx: &Context) -> Option<f64> {
        if holdout.is_empty() {
            return None;
        }
        let correct = self.map_tasks(holdout, |t| self.answer(t, ctx).correct).into_iter().filter(|c| *c).count();
        Some(correct as f64 / holdout.len() as f64)
    }

    fn map_tasks<T: Send>(&self, tasks: &[TaskInstance], f: impl Fn(&TaskInstance) -> T + Sync + Send) -> Vec<T> {
        if self.concurrent() {
            use rayon::prelude::*;
            tasks.par_iter().map(f).collect()
        } else {
            tasks.iter().map(f).collect()
        }
    }

    /// The continual protocol: batches answered against the batch-start
    /// context, then consolidated one sample at a time in order.
    /// Accuracy is taken from the answers given before each update.
    pub fn run_continual(&self, stream: &[TaskInstance], ctx0: Context, holdout: &[TaskInstance]) -> ContinualOutcome {
        let mut order = stream.to_vec();
        if self.config.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &["shuffle"]));
            order.shuffle(&mut rng);
        }
        let n = order.len();
        let mut ctx = ctx0;
        let mut checkpoints = Vec::new();
        if !holdout.is_empty() {
            checkpoints.push(Checkpoint { fraction_seen: 0.0, held_out_accuracy: self.holdout_accuracy(holdout, &ctx) });
        }
        let mut next_checkpoint = 0;
        let mut episodes = Vec::with_capacity(n);
        let mut phases = Vec::new();
        let mut records = Vec::with_capacity(n);
        for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
            let snapshot = ctx.clone();
            let answered = self.map_tasks(batch, |t| self.answer(t, &snapshot));
            let mut ids = Vec::with_capacity(batch.len());
            for (task, phase) in batch.iter().zip(answered) {
                let consolidation = self.consolidate(task, &phase.experiences, &mut ctx, &phase.seen);
                let ep = EpisodeRecord { index: episodes.len(), task_id: task.id.clone(), phase, consolidation };
                records.push(SampleRecord {
                    id: task.id.clone(),
                    correct: ep.phase.correct,
                    usd_exec: ep.phase.exec_usd(),
                    usd_system: ep.system_usd(),
                    error: ep.phase.experiences[0].error.clone(),
                });
                ids.push(task.id.clone());
                episodes.push(ep);
            }
            phases.push(PhaseRecord { batch: b, task_ids: ids });
            if !holdout.is_empty() {
                let seen = episodes.len();
                let mut acc = None;
                while next_checkpoint < CHECKPOINT_FRACTIONS.len()
                    && seen as f64 >= (CHECKPOINT_FRACTIONS[next_checkpoint] * n as f64).ceil()
                {
                    let a = *acc.get_or_insert_with(|| self.holdout_accuracy(holdout, &ctx));
                    checkpoints.push(Checkpoint { fraction_seen: seen as f64 / n as f64, held_out_accuracy: a });
                    next_checkpoint += 1;
                }
            }
        }
        let mut report = prequential_eval(records);
        report.checkpoints = checkpoints;
        ContinualOutcome { report, context: ctx, episodes, phases }
    }
}
