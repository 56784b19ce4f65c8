//! Strategy language, interpreter and experience-guided reasoning loop.

pub mod backends;
pub mod bench;
pub mod egur;
pub mod lang;
pub mod processes;
pub mod semantics;
pub mod strategies;

pub use backends::{Backend, BackendError, Completion, FnBackend, HttpBackend, LlmParams, PricingTable, ScriptedBackend};
pub use bench::{EvalReport, TaskInstance, TaskType};
pub use egur::{Context, Egur, EgurConfig, Experience};
pub use lang::{parse_strategy, pretty_print, validate, Expr, Program, Value};
pub use processes::{BinaryVerdict, ProcessRegistry};
pub use semantics::{run, CostLedger, FixBudget, Interpreter, RunError, RunState, TraceEvent, Usd};
