//! Settings resolved from flags, a TOML file and the environment, in that
//! order of precedence.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use egur_core::backends::{load_script, Backend, HttpBackend, HttpBackendConfig, PricingTable, ScriptedBackend};
use egur_core::egur::RetentionPolicy;
use egur_core::processes::{CodeRunner, ExternalRunner};
use egur_core::semantics::FixBudget;
use serde::Deserialize;

use crate::CliError;

pub const ENV_PREFIX: &str = "EGUR_";
pub const DEFAULT_OUT: &str = "egur-out";

/// The configuration file.
///
/// ```toml
/// backend = "http"
/// k = 5
/// [http]
/// endpointUrl = "http://localhost:8000/v1/chat/completions"
/// modelName = "qwen3-8b"
/// apiKeyEnv = "API_KEY"
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub backend: Option<String>,
    pub http: Option<HttpBackendConfig>,
    /// Prices for the scripted backend, per million tokens.
    pub pricing: Option<PricingTable>,
    pub k: Option<usize>,
    pub batch_size: Option<usize>,
    pub fix_depth: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub guide_retries: Option<usize>,
    pub max_entries: Option<usize>,
    pub max_notes: Option<usize>,
    pub prompts: Option<PathBuf>,
    pub context: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Shell command for ExecCode; `{file}` is replaced by the code file.
    pub code_runner: Option<String>,
    pub exec_timeout_secs: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

/// Values taken from `EGUR_*` variables.
#[derive(Debug, Default)]
pub struct EnvConfig {
    pub backend: Option<String>,
    pub k: Option<usize>,
    pub batch_size: Option<usize>,
    pub fix_depth: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub http_endpoint: Option<String>,
    pub http_model: Option<String>,
}

impl EnvConfig {
    pub fn from_env() -> Result<Self, CliError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let var = |name: &str| get(&format!("{ENV_PREFIX}{name}")).filter(|v| !v.is_empty());
        fn num<T: std::str::FromStr>(name: &str, v: Option<String>) -> Result<Option<T>, CliError> {
            v.map(|s| s.parse().map_err(|_| CliError::config(format!("{ENV_PREFIX}{name}: not a number: {s}"))))
                .transpose()
        }
        Ok(EnvConfig {
            backend: var("BACKEND"),
            k: num("K", var("K"))?,
            batch_size: num("BATCH_SIZE", var("BATCH_SIZE"))?,
            fix_depth: num("FIX_DEPTH", var("FIX_DEPTH"))?,
            seed: num("SEED", var("SEED"))?,
            jobs: num("JOBS", var("JOBS"))?,
            out: var("OUT").map(PathBuf::from),
            http_endpoint: var("HTTP_ENDPOINT"),
            http_model: var("HTTP_MODEL"),
        })
    }
}

/// First present value among flag, file and environment.
pub fn pick<T>(flag: Option<T>, file: Option<T>, env: Option<T>) -> Option<T> {
    flag.or(file).or(env)
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendChoice {
    Scripted(PathBuf),
    Http,
}

impl BackendChoice {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        match spec.split_once(':') {
            Some(("scripted", path)) if !path.is_empty() => Ok(BackendChoice::Scripted(PathBuf::from(path))),
            None if spec == "http" => Ok(BackendChoice::Http),
            _ => Err(CliError::config(format!("--backend must be `scripted:FILE` or `http`, got `{spec}`"))),
        }
    }
}

/// Everything needed to build a backend and registry.
#[derive(Debug)]
pub struct BackendSettings {
    pub choice: BackendChoice,
    pub http: Option<HttpBackendConfig>,
    pub pricing: PricingTable,
    pub record_path: Option<PathBuf>,
    pub fix_budget: FixBudget,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub out: PathBuf,
    pub runner: CodeRunner,
}

impl BackendSettings {
    pub fn resolve(flags: &crate::args::BackendArgs, file: &FileConfig, env: &EnvConfig) -> Result<Self, CliError> {
        let spec = pick(flags.backend.clone(), file.backend.clone(), env.backend.clone())
            .ok_or_else(|| CliError::config("no backend selected: pass --backend scripted:FILE or --backend http"))?;
        let choice = BackendChoice::parse(&spec)?;
        let out = pick(flags.out.clone(), file.out.clone(), env.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into());
        let depth = pick(flags.fix_depth, file.fix_depth, env.fix_depth);
        let fix_budget = match depth {
            Some(d) => FixBudget::new(d).map_err(|e| CliError::config(format!("--fix-depth: {e}")))?,
            None => FixBudget::default(),
        };
        let jobs = pick(flags.jobs, file.jobs, env.jobs);
        if jobs == Some(0) {
            return Err(CliError::config("--jobs must be at least 1"));
        }
        let record_path = flags.record_fixtures.then(|| out.join("fixtures.jsonl"));

        let http = match &choice {
            BackendChoice::Scripted(path) => {
                if !path.is_file() {
                    return Err(CliError::config(format!("script file {} does not exist", path.display())));
                }
                if record_path.is_some() {
                    log::warn!("--record-fixtures only applies to the http backend");
                }
                None
            }
            BackendChoice::Http => {
                let mut cfg = match (&file.http, &env.http_endpoint, &env.http_model) {
                    (Some(c), _, _) => c.clone(),
                    (None, Some(url), Some(model)) => HttpBackendConfig::new(url.clone(), model.clone()),
                    _ => {
                        return Err(CliError::config(
                            "http backend needs an [http] table in the config file or EGUR_HTTP_ENDPOINT and EGUR_HTTP_MODEL",
                        ))
                    }
                };
                if record_path.is_some() {
                    cfg.record_path = record_path.clone();
                }
                cfg.validate().map_err(|e| CliError::config(format!("http backend: {e}")))?;
                if let Some(var) = &cfg.api_key_env {
                    if std::env::var_os(var).is_none() {
                        return Err(CliError::config(format!("http backend: environment variable {var} is not set")));
                    }
                }
                Some(cfg)
            }
        };

        let timeout = match file.exec_timeout_secs {
            Some(s) => Duration::try_from_secs_f64(s)
                .ok()
                .filter(|d| !d.is_zero())
                .ok_or_else(|| CliError::config("exec-timeout-secs must be positive"))?,
            None => egur_core::processes::DEFAULT_EXEC_TIMEOUT,
        };
        let runner = match &file.code_runner {
            None => CodeRunner::Builtin { timeout },
            Some(cmd) if cmd == "builtin" => CodeRunner::Builtin { timeout },
            Some(cmd) => CodeRunner::External(ExternalRunner { timeout, ..ExternalRunner::new(cmd.clone()) }),
        };

        Ok(BackendSettings {
            choice,
            http,
            pricing: file.pricing.unwrap_or_default(),
            record_path,
            fix_budget,
            seed: pick(flags.seed, file.seed, env.seed).unwrap_or(0),
            jobs,
            out,
            runner,
        })
    }

    /// Builds the backend. Loading a script reads the file only.
    pub fn build_backend(&self) -> Result<Arc<dyn Backend>, CliError> {
        match &self.choice {
            BackendChoice::Scripted(path) => {
                let entries = load_script(path).map_err(CliError::config)?;
                Ok(Arc::new(ScriptedBackend::from_entries(entries, self.pricing)))
            }
            BackendChoice::Http => {
                let cfg = self.http.clone().expect("resolved with the http choice");
                if let Some(p) = &cfg.record_path {
                    if let Some(dir) = p.parent() {
                        std::fs::create_dir_all(dir).map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?;
                    }
                }
                Ok(Arc::new(HttpBackend::new(cfg).map_err(|e| CliError::config(e.to_string()))?))
            }
        }
    }

    pub fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.jobs {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::config(e.to_string()))
    }
}

pub fn retention(file: &FileConfig) -> Result<RetentionPolicy, CliError> {
    let d = RetentionPolicy::default();
    RetentionPolicy::new(file.max_entries.unwrap_or(d.max_entries), file.max_notes.unwrap_or(d.max_notes))
        .map_err(CliError::config)
}
