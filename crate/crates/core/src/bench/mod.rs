//! Benchmark tasks, 3-SAT formulas and evaluation reports.

mod report;
mod sat;
mod tasks;

pub use report::{emit_report, prequential_eval, Checkpoint, EvalReport, SampleRecord};
pub use sat::{
    random_formula, Clause, CnfFormula, SatError, BRUTE_FORCE_MAX_VARS, DEFAULT_CLAUSE_RATIO, DPLL_NODE_LIMIT,
};
pub use tasks::{
    gen_3sat, gen_split, load_tasks, parse_tasks, verify_answer, verify_output, write_tasks, SplitSpec, TaskError,
    TaskInstance, TaskType, SAT_MAX_VARS, SAT_MIN_VARS,
};
