//! Task instances: generation, loading and verification dispatch.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sat::{random_formula, CnfFormula, SatError};
use crate::processes::{answer_text, verify_3sat, verify_exact, BinaryVerdict};
use crate::lang::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Exact,
    Sat3,
}

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::Exact => "exact",
            TaskType::Sat3 => "sat3",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub id: String,
    pub question: String,
    pub task_type: TaskType,
    pub gold: Option<String>,
    pub formula: Option<CnfFormula>,
    /// Known satisfiability of `formula`, when decided.
    pub satisfiable: Option<bool>,
}

impl TaskInstance {
    pub fn exact(id: impl Into<String>, question: impl Into<String>, gold: impl Into<String>) -> Self {
        TaskInstance {
            id: id.into(),
            question: question.into(),
            task_type: TaskType::Exact,
            gold: Some(gold.into()),
            formula: None,
            satisfiable: None,
        }
    }

    pub fn sat3(id: impl Into<String>, formula: CnfFormula) -> Self {
        let satisfiable = formula.satisfiable();
        TaskInstance {
            id: id.into(),
            question: sat_question(&formula),
            task_type: TaskType::Sat3,
            gold: None,
            formula: Some(formula),
            satisfiable,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        match self.task_type {
            TaskType::Exact if self.gold.is_none() => Err("exact task without gold".into()),
            TaskType::Sat3 if self.formula.is_none() => Err("sat3 task without cnf".into()),
            _ => Ok(()),
        }
    }
}

fn sat_question(f: &CnfFormula) -> String {
    format!(
        "Find a truth assignment satisfying this 3-CNF formula over x1..x{n}:\n{}\n\n\
         Finish with a line `FINAL ANSWER: x1=T,x2=F,...` assigning every variable x1..x{n}.",
        f.render(),
        n = f.num_vars
    )
}

/// Variable range accepted unless any size is allowed.
pub const SAT_MIN_VARS: u32 = 5;
pub const SAT_MAX_VARS: u32 = 40;

/// A 3-SAT task. Variable counts outside 5..=40 need `allow_any_size`.
pub fn gen_3sat(num_vars: u32, clause_ratio: f64, seed: u64, allow_any_size: bool) -> Result<TaskInstance, SatError> {
    if !allow_any_size && !(SAT_MIN_VARS..=SAT_MAX_VARS).contains(&num_vars) {
        return Err(SatError::Generation(format!(
            "{num_vars} variables is outside {SAT_MIN_VARS}..={SAT_MAX_VARS}"
        )));
    }
    let f = random_formula(num_vars, clause_ratio, seed)?;
    Ok(TaskInstance::sat3(format!("sat3-n{num_vars}-s{seed}"), f))
}

/// Options for generating a train/test split of 3-SAT tasks.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub train: usize,
    pub test: usize,
    pub min_vars: u32,
    pub max_vars: u32,
    pub clause_ratio: f64,
    pub seed: u64,
    pub satisfiable_only: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 400,
            test: 40,
            min_vars: SAT_MIN_VARS,
            max_vars: SAT_MAX_VARS,
            clause_ratio: super::sat::DEFAULT_CLAUSE_RATIO,
            seed: 0,
            satisfiable_only: false,
        }
    }
}

pub fn gen_split(spec: &SplitSpec) -> Result<(Vec<TaskInstance>, Vec<TaskInstance>), SatError> {
    if spec.min_vars > spec.max_vars {
        return Err(SatError::Generation("min vars above max vars".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.train + spec.test);
    let mut attempts = 0usize;
    while out.len() < spec.train + spec.test {
        attempts += 1;
        if attempts > 100 * (spec.train + spec.test) + 1000 {
            return Err(SatError::Generation("could not find enough satisfiable formulas".into()));
        }
        let n = rng.random_range(spec.min_vars..=spec.max_vars);
        let seed: u64 = rng.random();
        let task = gen_3sat(n, spec.clause_ratio, seed, true)?;
        if spec.satisfiable_only && task.satisfiable != Some(true) {
            continue;
        }
        out.push(task);
    }
    let test = out.split_off(spec.train);
    Ok((out, test))
}

/// Verifies a strategy output against a task. Malformed answers count as
/// incorrect.
pub fn verify_answer(task: &TaskInstance, answer: &str) -> BinaryVerdict {
    let result = match (task.task_type, &task.formula) {
        (TaskType::Exact, _) => verify_exact(task, answer),
        (TaskType::Sat3, Some(f)) => verify_3sat(f, answer),
        (TaskType::Sat3, None) => return BinaryVerdict::incorrect("task has no formula"),
    };
    result.unwrap_or_else(|e| BinaryVerdict::incorrect(e.to_string()))
}

/// Verifies a raw strategy output value.
pub fn verify_output(task: &TaskInstance, output: &Value) -> (String, BinaryVerdict) {
    let answer = answer_text(output);
    let verdict = verify_answer(task, &answer);
    (answer, verdict)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct TaskLine {
    id: String,
    task_type: TaskType,
    question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cnf: Option<Vec<Vec<i32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_vars: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    satisfiable: Option<bool>,
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

fn from_line(l: TaskLine) -> Result<TaskInstance, String> {
    let formula = match l.cnf {
        Some(cnf) => {
            let clauses = cnf
                .into_iter()
                .map(|c| <[i32; 3]>::try_from(c.as_slice()).map_err(|_| "every clause needs 3 literals".to_owned()))
                .collect::<Result<Vec<_>, _>>()?;
            let max_var = clauses.iter().flatten().map(|l| l.unsigned_abs()).max().unwrap_or(0);
            let n = l.num_vars.unwrap_or(max_var);
            Some(CnfFormula::new(n, clauses).map_err(|e| e.to_string())?)
        }
        None => None,
    };
    let satisfiable = match (&formula, l.satisfiable) {
        (_, Some(s)) => Some(s),
        (Some(f), None) if f.num_vars <= super::sat::BRUTE_FORCE_MAX_VARS => f.satisfiable(),
        _ => None,
    };
    let t = TaskInstance {
        id: l.id,
        question: l.question,
        task_type: l.task_type,
        gold: l.gold,
        formula,
        satisfiable,
    };
    t.check()?;
    Ok(t)
}

fn to_line(t: &TaskInstance) -> TaskLine {
    TaskLine {
        id: t.id.clone(),
        task_type: t.task_type,
        question: t.question.clone(),
        gold: t.gold.clone(),
        cnf: t.formula.as_ref().map(|f| f.clauses.iter().map(|c| c.to_vec()).collect()),
        num_vars: t.formula.as_ref().map(|f| f.num_vars),
        satisfiable: t.satisfiable,
    }
}

pub fn parse_tasks(r: impl BufRead) -> Result<Vec<TaskInstance>, TaskError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| TaskError::Schema { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: TaskLine = serde_json::from_str(&line)
            .map_err(|e| TaskError::Schema { line: line_no, message: e.to_string() })?;
        out.push(from_line(raw).map_err(|message| TaskError::Schema { line: line_no, message })?);
    }
    Ok(out)
}

pub fn load_tasks(path: &Path) -> Result<Vec<TaskInstance>, TaskError> {
    let f = std::fs::File::open(path)
        .map_err(|source| TaskError::Io { path: path.display().to_string(), source })?;
    parse_tasks(std::io::BufReader::new(f))
}

pub fn write_tasks(tasks: &[TaskInstance], mut w: impl Write) -> std::io::Result<()> {
    for t in tasks {
        serde_json::to_writer(&mut w, &to_line(t))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_examples() {
        assert!(parse_tasks("".as_bytes()).unwrap().is_empty());
        let one = r#"{"id":"a","taskType":"exact","question":"1+1?","gold":"2"}"#;
        let t = parse_tasks(one.as_bytes()).unwrap();
        assert_eq!(t, vec![TaskInstance::exact("a", "1+1?", "2")]);
        let bad = format!("{one}\n{}", r#"{"id":"b","taskType":"exact","question":"?"}"#);
        let err = parse_tasks(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
    }

    #[test]
    fn sat_tasks_round_trip() {
        let t = gen_3sat(8, 4.26, 9, false).unwrap();
        assert_eq!(t.formula.as_ref().unwrap().clauses.len(), 34);
        assert_eq!(t.satisfiable, Some(t.formula.as_ref().unwrap().brute_force_sat().is_some()));
        let mut buf = Vec::new();
        write_tasks(std::slice::from_ref(&t), &mut buf).unwrap();
        assert_eq!(parse_tasks(buf.as_slice()).unwrap(), vec![t]);
        assert!(gen_3sat(3, 1.0, 0, false).is_err());
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec { train: 12, test: 3, max_vars: 10, ..SplitSpec::default() };
        let (train, test) = gen_split(&spec).unwrap();
        assert_eq!((train.len(), test.len()), (12, 3));
        let (train2, _) = gen_split(&spec).unwrap();
        assert_eq!(train, train2);
    }

    #[test]
    fn dispatch_marks_garbage_incorrect() {
        let t = gen_3sat(5, 2.0, 1, false).unwrap();
        assert!(!verify_answer(&t, "no idea").correct);
    }
}
