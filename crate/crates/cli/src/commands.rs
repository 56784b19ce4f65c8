use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use egur_core::bench::{emit_report, gen_split, load_tasks, verify_answer, EvalReport, SplitSpec, TaskInstance};
use egur_core::egur::{Context, ContinualOutcome, Egur, EgurConfig, Prompts};
use egur_core::lang::{parse_strategy, pretty_print, validate, Program, Value};
use egur_core::processes::{answer_text, ProcessDeps, ProcessRegistry};
use egur_core::semantics::{read_jsonl, replay_trace, write_jsonl, CostLedger, Interpreter, RunState, TraceEvent};
use egur_core::strategies::{build_with_prelude, list_builtins, BuiltinName, BuiltinSpec};
use serde_json::json;

use crate::args::{Cli, Command, ContinualArgs, GenTasksArgs, ReplayArgs, ReportArgs, RunStrategyArgs};
use crate::config::{pick, retention, BackendSettings, EnvConfig, FileConfig};
use crate::CliError;

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config_path = cli.config.clone().or_else(|| std::env::var_os("EGUR_CONFIG").map(PathBuf::from));
    let file = match &config_path {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let env = EnvConfig::from_env()?;
    match cli.command {
        Command::RunStrategy(a) => run_strategy(a, &file, &env),
        Command::Continual(a) => continual(a, &file, &env),
        Command::GenTasks(a) => gen_tasks(a),
        Command::Replay(a) => replay(a),
        Command::Report(a) => report(a),
        Command::ListBuiltins => list(),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::task(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::task(format!("{}: {e}", path.display())))
}

fn builtin_name(s: &str) -> Result<BuiltinName, CliError> {
    let wanted = s.replace('-', "_").to_ascii_lowercase();
    BuiltinName::ALL.into_iter().find(|b| b.as_str() == wanted).ok_or_else(|| {
        let names: Vec<&str> = BuiltinName::ALL.iter().map(|b| b.as_str()).collect();
        CliError::config(format!("unknown builtin `{s}`; expected one of {}", names.join(", ")))
    })
}

fn registry(settings: &BackendSettings, backend: Arc<dyn egur_core::Backend>) -> ProcessRegistry {
    let mut deps = ProcessDeps::new(backend);
    deps.runner = settings.runner.clone();
    ProcessRegistry::standard(deps)
}

fn load_program(a: &RunStrategyArgs, names: &std::collections::BTreeSet<String>) -> Result<Program, CliError> {
    let origin = a.strat.as_ref().map_or_else(|| "<builtin>".to_owned(), |p| p.display().to_string());
    let program = match (&a.strat, &a.builtin) {
        (Some(path), _) => {
            let text = read_file(path)?;
            parse_strategy(&text).map_err(|e| CliError::config(format!("{origin}:{e}")))?
        }
        (None, Some(name)) => {
            let mut spec = BuiltinSpec::new(builtin_name(name)?);
            if let Some(n) = a.samples {
                spec = spec.samples(n);
            }
            if let Some(n) = a.max_rounds {
                spec = spec.max_rounds(n);
            }
            build_with_prelude(&spec).map_err(|e| CliError::config(e.to_string()))?
        }
        (None, None) => return Err(CliError::config("pass --strat FILE or --builtin NAME")),
    };
    let diags = validate(&program, names);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(|d| format!("{origin}:{d}")).collect();
        return Err(CliError::config(lines.join("\n")));
    }
    Ok(program)
}

fn print_ledger(ledger: &CostLedger) {
    println!("cost: ${} ({} input tokens, {} output tokens)", ledger.usd, ledger.input_tokens, ledger.output_tokens);
    for (process, usd) in &ledger.per_process {
        println!("  {process}: ${usd}");
    }
}

fn run_strategy(a: RunStrategyArgs, file: &FileConfig, env: &EnvConfig) -> Result<(), CliError> {
    let settings = BackendSettings::resolve(&a.backend, file, env)?;
    let backend = settings.build_backend()?;
    let parallel = !backend.is_order_sensitive();
    let reg = registry(&settings, backend);
    let program = load_program(&a, &reg.names())?;
    let pool = settings.pool()?;

    let mut state = RunState::new(settings.seed);
    let result = pool.install(|| {
        Interpreter::new(&reg)
            .with_budget(settings.fix_budget)
            .with_parallel(parallel)
            .run(&program, Value::text(a.input.clone()), &mut state)
    });
    if a.backend.out.is_some() {
        write_trace(&settings.out.join("traces").join("run.jsonl"), &state.trace)?;
    }
    let output = result.map_err(|e| {
        print_ledger(&state.cost);
        CliError::task(format!("strategy failed: {e}"))
    })?;
    let answer = answer_text(&output);
    println!("answer: {answer}");
    if let Some(gold) = &a.gold {
        let verdict = verify_answer(&TaskInstance::exact("cli", a.input.clone(), gold.clone()), &answer);
        let word = if verdict.correct { "correct" } else { "incorrect" };
        match verdict.detail.is_empty() {
            true => println!("verdict: {word}"),
            false => println!("verdict: {word} ({})", verdict.detail),
        }
    }
    print_ledger(&state.cost);
    Ok(())
}

fn write_trace(path: &Path, trace: &[TraceEvent]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_jsonl(trace, &mut buf).map_err(|e| CliError::task(e.to_string()))?;
    write_file(path, &String::from_utf8_lossy(&buf))
}

fn sidecar_path(context: &Path) -> PathBuf {
    context.with_extension("meta.json")
}

fn load_context(
    path: Option<&Path>,
    file: &FileConfig,
    names: &std::collections::BTreeSet<String>,
) -> Result<Context, CliError> {
    let policy = retention(file)?;
    let Some(path) = path else {
        return Ok(Context::new(policy));
    };
    let text = read_file(path)?;
    let side = sidecar_path(path);
    let sidecar = if side.is_file() { Some(read_file(&side)?) } else { None };
    let mut ctx = Context::from_text(&text, sidecar.as_deref(), names)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if file.max_entries.is_some() || file.max_notes.is_some() || sidecar.is_none() {
        ctx.policy = policy;
        ctx.enforce_retention();
    }
    Ok(ctx)
}

fn load_task_file(path: &Path) -> Result<Vec<TaskInstance>, CliError> {
    load_tasks(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn continual(a: ContinualArgs, file: &FileConfig, env: &EnvConfig) -> Result<(), CliError> {
    let settings = BackendSettings::resolve(&a.backend, file, env)?;
    let tasks = load_task_file(&a.tasks)?;
    let holdout = match &a.holdout {
        Some(p) => load_task_file(p)?,
        None => Vec::new(),
    };
    let prompts = match a.prompts.clone().or_else(|| file.prompts.clone()) {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(CliError::config(format!("prompts directory {} does not exist", dir.display())));
            }
            Prompts::load_dir(&dir).map_err(|e| CliError::config(e.to_string()))?
        }
        None => Prompts::default(),
    };
    prompts.validate().map_err(|e| CliError::config(e.to_string()))?;

    let defaults = EgurConfig::default();
    let config = EgurConfig {
        k: pick(a.k, file.k, env.k).unwrap_or(defaults.k),
        batch_size: pick(a.batch_size, file.batch_size, env.batch_size).unwrap_or(defaults.batch_size),
        fix_budget: settings.fix_budget,
        guide_retries: file.guide_retries.unwrap_or(defaults.guide_retries),
        seed: settings.seed,
        shuffle: !a.no_shuffle,
        ..defaults
    };
    config.validate().map_err(CliError::config)?;

    let backend = settings.build_backend()?;
    let reg = Arc::new(registry(&settings, Arc::clone(&backend)));
    let context_path = a.context.clone().or_else(|| file.context.clone());
    let ctx0 = load_context(context_path.as_deref(), file, &reg.names())?;

    if a.dry_run {
        println!(
            "dry run: {} tasks, {} held out, k={}, batch size {}, context with {} entries and {} notes; no backend calls made",
            tasks.len(),
            holdout.len(),
            config.k,
            config.batch_size,
            ctx0.library.len(),
            ctx0.notes.len()
        );
        return Ok(());
    }

    let egur = Egur::new(backend, reg).with_config(config).with_prompts(prompts);
    let outcome = settings.pool()?.install(|| egur.run_continual(&tasks, ctx0, &holdout));
    write_outputs(&settings.out, &outcome)?;

    let r = &outcome.report;
    println!("prequential accuracy: {:.4} over {} samples", r.prequential_accuracy, r.per_sample.len());
    let system: egur_core::Usd = r.per_sample.iter().map(|s| s.usd_system).sum();
    println!("execution cost: ${}", r.cumulative_cost_curve.last().copied().unwrap_or_default());
    println!("guide and consolidator cost: ${system}");
    for c in &r.checkpoints {
        if let Some(acc) = c.held_out_accuracy {
            println!("held-out accuracy after {:.0}% of the stream: {acc:.4}", c.fraction_seen * 100.0);
        }
    }
    println!("outputs written to {}", settings.out.display());
    Ok(())
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn write_outputs(out: &Path, outcome: &ContinualOutcome) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::task(format!("{}: {e}", out.display())))?;
    emit_report(&outcome.report, out).map_err(|e| CliError::task(format!("{}: {e}", out.display())))?;
    write_file(&out.join("context.txt"), &outcome.context.to_text())?;
    write_file(&sidecar_path(&out.join("context.txt")), &outcome.context.to_sidecar())?;

    let mut episodes = String::new();
    for ep in &outcome.episodes {
        let line = json!({
            "index": ep.index,
            "taskId": ep.task_id,
            "answer": ep.phase.answer,
            "correct": ep.phase.correct,
            "seen": ep.phase.seen,
            "guide": ep.phase.guide,
            "experiences": ep.phase.experiences.iter().map(|e| e.log()).collect::<Vec<_>>(),
            "consolidation": ep.consolidation,
        });
        episodes.push_str(&line.to_string());
        episodes.push('\n');
        for e in &ep.phase.experiences {
            let name = format!("{}-{}.jsonl", file_stem(&ep.task_id), e.slot);
            write_trace(&out.join("traces").join(name), &e.trace)?;
        }
    }
    write_file(&out.join("episodes.jsonl"), &episodes)
}

fn gen_tasks(a: GenTasksArgs) -> Result<(), CliError> {
    let spec = SplitSpec {
        train: a.train,
        test: a.test,
        min_vars: a.min_vars,
        max_vars: a.max_vars,
        clause_ratio: a.ratio,
        seed: a.seed,
        satisfiable_only: a.satisfiable_only,
    };
    let (train, test) = gen_split(&spec).map_err(|e| CliError::config(e.to_string()))?;
    for (name, tasks) in [("train.jsonl", &train), ("test.jsonl", &test)] {
        let mut buf = Vec::new();
        egur_core::bench::write_tasks(tasks, &mut buf).map_err(|e| CliError::task(e.to_string()))?;
        write_file(&a.out.join(name), &String::from_utf8_lossy(&buf))?;
    }
    println!("wrote {} train and {} test tasks to {}", train.len(), test.len(), a.out.display());
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<(), CliError> {
    let f = fs::File::open(&a.trace).map_err(|e| CliError::config(format!("{}: {e}", a.trace.display())))?;
    let trace = read_jsonl(std::io::BufReader::new(f))
        .map_err(|e| CliError::config(format!("{}: {e}", a.trace.display())))?;
    let text = replay_trace(&trace).map_err(|e| CliError::task(e.to_string()))?;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes());
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let path = if a.report.is_dir() { a.report.join("report.json") } else { a.report.clone() };
    let r: EvalReport = serde_json::from_str(&read_file(&path)?)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if a.csv {
        print!("{}", r.costs_csv());
        return Ok(());
    }
    let n = r.per_sample.len();
    let correct = r.per_sample.iter().filter(|s| s.correct).count();
    let system: egur_core::Usd = r.per_sample.iter().map(|s| s.usd_system).sum();
    let exec = r.cumulative_cost_curve.last().copied().unwrap_or_default();
    println!("samples: {n}");
    println!("prequential accuracy: {:.4} ({correct}/{n})", r.prequential_accuracy);
    println!("execution cost: ${exec}");
    println!("guide and consolidator cost: ${system}");
    if n >= 2 {
        let half = n / 2;
        let fmt = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.4}"));
        println!("accuracy first half / second half: {} / {}", fmt(r.accuracy(0..half)), fmt(r.accuracy(half..n)));
        println!(
            "mean execution cost first half / second half: {} / {}",
            fmt(r.mean_exec_cost(0..half)),
            fmt(r.mean_exec_cost(half..n))
        );
    }
    for c in &r.checkpoints {
        let acc = c.held_out_accuracy.map_or("-".to_owned(), |x| format!("{x:.4}"));
        println!("checkpoint {:.3}: held-out accuracy {acc}", c.fraction_seen);
    }
    let failures = r.per_sample.iter().filter(|s| s.error.is_some()).count();
    if failures > 0 {
        println!("samples whose first strategy failed: {failures}");
    }
    Ok(())
}

fn list() -> Result<(), CliError> {
    for b in list_builtins() {
        let c = &b.classification;
        let mark = |on: bool| if on { "yes" } else { "no" };
        let tools: Vec<String> = c.tools.iter().map(|t| serde_json::to_value(t).unwrap().as_str().unwrap_or("").to_owned()).collect();
        println!(
            "{} ({}): parallelization {}, conditionals {}, recursion {}, tools {}",
            b.name.as_str(),
            c.kind(),
            mark(c.parallelization),
            mark(c.conditionals),
            mark(c.recursion),
            tools.join(", ")
        );
        let program = egur_core::strategies::build_builtin(&BuiltinSpec::new(b.name)).expect("defaults are valid");
        println!("  {}", pretty_print(&program));
        for p in &b.params {
            println!("  {} ({}): {}", p.name, p.kind, p.doc);
        }
    }
    Ok(())
}
