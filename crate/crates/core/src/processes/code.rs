//! Code execution: a builtin sandbox for the expression language and an
//! external subprocess runner.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::lang::parse_expr;
use crate::semantics::expr::{Env, EvalError, EvalLimits, Evaluator, RtValue};
use crate::semantics::ExecEnv;

pub const DEFAULT_EXEC_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("execution timed out after {:.1}s; output so far: {partial_output:?}", after.as_secs_f64())]
    Timeout { after: Duration, partial_output: String },
    #[error("runner crashed: {0}")]
    Crash(String),
    #[error("no code runner configured")]
    Unconfigured,
}

/// Subprocess runner. `command` is run through `sh -c` with `{file}`
/// replaced by the path of a file holding the code; without a `{file}`
/// placeholder the code is written to stdin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExternalRunner {
    pub command: String,
    #[serde(with = "secs_f64", rename = "timeoutSecs")]
    pub timeout: Duration,
    pub max_output_bytes: usize,
}

mod secs_f64 {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

impl ExternalRunner {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalRunner { command: command.into(), timeout: DEFAULT_EXEC_TIMEOUT, max_output_bytes: 64 * 1024 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CodeRunner {
    /// Evaluates `let name = expr`, `name = expr`, `print expr` and bare
    /// expression lines of the strategy expression language.
    Builtin { timeout: Duration },
    External(ExternalRunner),
    Unconfigured,
}

impl Default for CodeRunner {
    fn default() -> Self {
        CodeRunner::Builtin { timeout: DEFAULT_EXEC_TIMEOUT }
    }
}

/// Runs `code` in `env` and returns what it printed.
pub fn exec_code(runner: &CodeRunner, code: &str, env: &mut ExecEnv) -> Result<String, ExecError> {
    env.executions += 1;
    match runner {
        CodeRunner::Builtin { timeout } => run_builtin(code, env, *timeout),
        CodeRunner::External(ext) => run_external(ext, code, env),
        CodeRunner::Unconfigured => Err(ExecError::Unconfigured),
    }
}

enum StmtError {
    Parse(String),
    Eval(EvalError),
}

enum Stmt<'a> {
    Bind(&'a str, &'a str),
    Print(&'a str),
    Eval(&'a str),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn classify(line: &str) -> Stmt<'_> {
    if let Some(rest) = line.strip_prefix("print") {
        if rest.starts_with([' ', '\t', '(']) {
            return Stmt::Print(rest.trim());
        }
    }
    let body = line.strip_prefix("let ").unwrap_or(line);
    if let Some(eq) = body.find('=') {
        let (name, rhs) = (body[..eq].trim(), &body[eq + 1..]);
        if is_ident(name) && !rhs.starts_with('=') {
            return Stmt::Bind(name, rhs.trim());
        }
    }
    Stmt::Eval(line)
}

fn run_builtin(code: &str, env: &mut ExecEnv, timeout: Duration) -> Result<String, ExecError> {
    let start = Instant::now();
    let limits = EvalLimits { max_steps: u64::MAX, deadline: Some(start + timeout), ..EvalLimits::default() };
    let mut ev = Evaluator::new(limits);
    let mut out = String::new();
    for (i, raw) in code.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (src, target) = match classify(line) {
            Stmt::Bind(name, rhs) => (rhs, Some(name)),
            Stmt::Print(e) | Stmt::Eval(e) => (e, None),
        };
        let printing = matches!(classify(line), Stmt::Print(_));
        let result = match parse_expr(src) {
            Ok(e) => ev.eval(&e, &Env::from_bindings(&env.bindings)).map_err(StmtError::Eval),
            Err(e) => Err(StmtError::Parse(e.to_string())),
        };
        match result {
            Ok(v) => {
                if let Some(name) = target {
                    env.bindings.insert(name.to_owned(), v);
                } else if printing {
                    out.push_str(&render(&v));
                    out.push('\n');
                }
            }
            Err(StmtError::Eval(EvalError::Timeout)) => {
                return Err(ExecError::Timeout { after: start.elapsed(), partial_output: out });
            }
            Err(e) => {
                let msg = match e {
                    StmtError::Eval(err) => err.to_string(),
                    StmtError::Parse(msg) => msg,
                };
                out.push_str(&format!("Error: line {}: {msg}\n", i + 1));
                break;
            }
        }
    }
    Ok(out)
}

fn render(v: &RtValue) -> String {
    match v {
        RtValue::Data(d) => d.render_plain(),
        RtValue::Closure(c) => format!("<function of {}>", c.param),
    }
}

/// Kills the child and everything it started.
fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    if let Ok(pgid) = libc::pid_t::try_from(child.id()) {
        // SAFETY: signals only the group created for this child.
        unsafe {
            libc::kill(-pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
    let _ = child.wait();
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn truncate(mut s: String, max: usize) -> String {
    if s.len() > max {
        let mut cut = max;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
        s.push_str("\n[output truncated]");
    }
    s
}

fn run_external(ext: &ExternalRunner, code: &str, env: &mut ExecEnv) -> Result<String, ExecError> {
    let source = if env.prelude.is_empty() { code.to_owned() } else { format!("{}\n{code}", env.prelude) };
    let mut file = tempfile::Builder::new()
        .prefix("egur-exec-")
        .tempfile()
        .map_err(|e| ExecError::Crash(e.to_string()))?;
    file.write_all(source.as_bytes()).map_err(|e| ExecError::Crash(e.to_string()))?;
    file.flush().map_err(|e| ExecError::Crash(e.to_string()))?;

    let uses_file = ext.command.contains("{file}");
    let path = file.path().to_string_lossy().into_owned();
    let cmdline = ext.command.replace("{file}", &shell_quote(&path));
    let mut command = Command::new("sh");
    #[cfg(unix)]
    std::os::unix::process::CommandExt::process_group(&mut command, 0);
    let mut child = command
        .arg("-c")
        .arg(&cmdline)
        .stdin(if uses_file { Stdio::null() } else { Stdio::piped() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| ExecError::Crash(format!("cannot start `{cmdline}`: {e}")))?;

    if let Some(mut stdin) = child.stdin.take() {
        let src = source.clone();
        std::thread::spawn(move || {
            let _ = stdin.write_all(src.as_bytes());
        });
    }
    let mut stdout = child.stdout.take().expect("piped");
    let mut stderr = child.stderr.take().expect("piped");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });

    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if start.elapsed() >= ext.timeout => {
                kill_tree(&mut child);
                break None;
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(ExecError::Crash(e.to_string())),
        }
    };
    let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
    let fresh = stdout.strip_prefix(env.prelude_output.as_str()).unwrap_or(&stdout).to_owned();

    let Some(status) = status else {
        return Err(ExecError::Timeout {
            after: start.elapsed(),
            partial_output: truncate(fresh, ext.max_output_bytes),
        });
    };
    if status.success() {
        env.prelude = source;
        env.prelude_output = stdout;
        Ok(truncate(fresh, ext.max_output_bytes))
    } else if status.code().is_none() {
        Err(ExecError::Crash(format!("terminated by signal; stderr: {}", stderr.trim())))
    } else {
        Ok(truncate(format!("{fresh}{stderr}"), ext.max_output_bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_snippet(code: &str) -> Result<String, ExecError> {
        exec_code(&CodeRunner::default(), code, &mut ExecEnv::default())
    }

    #[test]
    fn prints_and_persists() {
        assert_eq!(eval_snippet("print 1 + 1").unwrap(), "2\n");
        let runner = CodeRunner::default();
        let mut env = ExecEnv::default();
        assert_eq!(exec_code(&runner, "let x = 40\ninc = lambda n. n + 1", &mut env).unwrap(), "");
        assert_eq!(exec_code(&runner, "print(inc(x + 1))", &mut env).unwrap(), "42\n");
        assert_eq!(env.executions(), 2);
    }

    #[test]
    fn errors_become_output() {
        let out = eval_snippet("print 1\nprint nope\nprint 3").unwrap();
        assert_eq!(out, "1\nError: line 2: unbound variable `nope`\n");
    }

    #[test]
    fn infinite_loop_times_out() {
        let runner = CodeRunner::Builtin { timeout: Duration::from_millis(100) };
        let code = "print 7\nlet w = lambda f. f(f)\nprint w(w)";
        match exec_code(&runner, code, &mut ExecEnv::default()) {
            Err(ExecError::Timeout { partial_output, .. }) => assert_eq!(partial_output, "7\n"),
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn unconfigured_runner_errors() {
        assert_eq!(exec_code(&CodeRunner::Unconfigured, "print 1", &mut ExecEnv::default()), Err(ExecError::Unconfigured));
    }

    #[test]
    fn external_runner_replays_prelude() {
        let ext = ExternalRunner::new("sh {file}");
        let runner = CodeRunner::External(ext);
        let mut env = ExecEnv::default();
        assert_eq!(exec_code(&runner, "X=5\necho first", &mut env).unwrap(), "first\n");
        assert_eq!(exec_code(&runner, "echo $X", &mut env).unwrap(), "5\n");
        let out = exec_code(&runner, "echo oops >&2; exit 3", &mut env).unwrap();
        assert_eq!(out, "oops\n");
        assert_eq!(exec_code(&runner, "echo $X", &mut env).unwrap(), "5\n");
    }

    #[test]
    fn external_runner_times_out() {
        let ext = ExternalRunner { timeout: Duration::from_millis(200), ..ExternalRunner::new("sh {file}") };
        let r = exec_code(&CodeRunner::External(ext), "echo part; sleep 5", &mut ExecEnv::default());
        match r {
            Err(ExecError::Timeout { partial_output, .. }) => assert_eq!(partial_output, "part\n"),
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn stdin_framing_without_placeholder() {
        let runner = CodeRunner::External(ExternalRunner::new("sh"));
        assert_eq!(exec_code(&runner, "echo via-stdin", &mut ExecEnv::default()).unwrap(), "via-stdin\n");
    }
}
