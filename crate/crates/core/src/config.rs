//! Run configuration: a flat `key = value` text format with `#` comments.
//! Unknown keys are hard errors; defaults fill everything optional.
//! `load_config(print_config(c))` reproduces `c` exactly.

use std::path::{Path, PathBuf};

use crate::mpm::Boundary;
use crate::opt::OptConfig;
use crate::search::SearchConfig;
use crate::tasks::TaskId;

pub const API_KEY_ENV: &str = "SGA_API_KEY";

#[derive(Clone, Debug, PartialEq)]
pub enum BackendConfig {
    Http { endpoint: String, model: String },
    Scripted { script: PathBuf },
}

/// Optional overrides of the task's simulation defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimOverrides {
    pub grid_res: Option<usize>,
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub substeps_per_frame: Option<usize>,
    pub boundary: Option<Boundary>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: TaskId,
    pub backend: BackendConfig,
    pub outdir: PathBuf,
    pub search: SearchConfig,
    pub opt: OptConfig,
    pub sim: SimOverrides,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("line {line}: bad value for `{key}`: {detail}")]
    BadValue { line: usize, key: String, detail: String },
    #[error("referenced path does not exist: {0}")]
    MissingPath(PathBuf),
    #[error("backend is http but the {API_KEY_ENV} environment variable is not set")]
    MissingApiKey,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const KNOWN_KEYS: &[&str] = &[
    "task",
    "backend",
    "endpoint",
    "model",
    "script",
    "outdir",
    "n_iterations",
    "history_k",
    "n_exploit",
    "n_explore",
    "temp_exploit",
    "temp_explore",
    "heap_capacity",
    "root_seed",
    "opt_steps",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "grad_clip_norm",
    "curve_checkpoints",
    "grid_res",
    "dt",
    "n_steps",
    "substeps_per_frame",
    "boundary",
    "seed",
];

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base_dir, true)
}

/// Parses config text. `check_env` controls whether the http backend
/// requires the API key to be present (the round-trip tests disable it).
pub fn parse_config(text: &str, base_dir: &Path, check_env: bool) -> Result<RunConfig, ConfigError> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::BadValue {
                line: i + 1,
                key: line.to_string(),
                detail: "expected `key = value`".into(),
            });
        };
        let key = k.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { line: i + 1, key });
        }
        pairs.push((i + 1, key, v.trim().to_string()));
    }

    let get = |key: &str| pairs.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.clone()));

    fn parse<T: std::str::FromStr>(entry: Option<(usize, String)>, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match entry {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|e| ConfigError::BadValue {
                line,
                key: key.to_string(),
                detail: e.to_string(),
            }),
        }
    }

    let (task_line, task_str) = get("task").ok_or(ConfigError::MissingKey("task"))?;
    let task = task_str
        .chars()
        .next()
        .filter(|_| task_str.len() == 1)
        .and_then(TaskId::from_letter)
        .ok_or_else(|| ConfigError::BadValue {
            line: task_line,
            key: "task".into(),
            detail: format!("`{task_str}` is not one of a, b, c, d, x"),
        })?;

    let (backend_line, backend_str) = get("backend").ok_or(ConfigError::MissingKey("backend"))?;
    let backend = match backend_str.as_str() {
        "http" => {
            let endpoint = get("endpoint").ok_or(ConfigError::MissingKey("endpoint"))?.1;
            let model = get("model").ok_or(ConfigError::MissingKey("model"))?.1;
            if check_env && std::env::var(API_KEY_ENV).is_err() {
                return Err(ConfigError::MissingApiKey);
            }
            BackendConfig::Http { endpoint, model }
        }
        "scripted" => {
            let script_rel = get("script").ok_or(ConfigError::MissingKey("script"))?.1;
            let script = base_dir.join(script_rel);
            if !script.exists() {
                return Err(ConfigError::MissingPath(script));
            }
            BackendConfig::Scripted { script }
        }
        other => {
            return Err(ConfigError::BadValue {
                line: backend_line,
                key: "backend".into(),
                detail: format!("`{other}` is not `http` or `scripted`"),
            })
        }
    };

    let outdir = base_dir.join(get("outdir").map(|(_, v)| v).unwrap_or_else(|| "runs".to_string()));

    let d = SearchConfig::default();
    let search = SearchConfig {
        n_iterations: parse(get("n_iterations"), "n_iterations")?.unwrap_or(d.n_iterations),
        history_k: parse(get("history_k"), "history_k")?.unwrap_or(d.history_k),
        n_exploit: parse(get("n_exploit"), "n_exploit")?.unwrap_or(d.n_exploit),
        n_explore: parse(get("n_explore"), "n_explore")?.unwrap_or(d.n_explore),
        temp_exploit: parse(get("temp_exploit"), "temp_exploit")?.unwrap_or(d.temp_exploit),
        temp_explore: parse(get("temp_explore"), "temp_explore")?.unwrap_or(d.temp_explore),
        heap_capacity: parse(get("heap_capacity"), "heap_capacity")?.unwrap_or(d.heap_capacity),
        root_seed: parse(get("root_seed"), "root_seed")?.unwrap_or(d.root_seed),
    };

    let od = OptConfig::default();
    let opt = OptConfig {
        n_steps: parse(get("opt_steps"), "opt_steps")?.unwrap_or(od.n_steps),
        learning_rate: parse(get("learning_rate"), "learning_rate")?.unwrap_or(od.learning_rate),
        adam_beta1: parse(get("adam_beta1"), "adam_beta1")?.unwrap_or(od.adam_beta1),
        adam_beta2: parse(get("adam_beta2"), "adam_beta2")?.unwrap_or(od.adam_beta2),
        adam_eps: parse(get("adam_eps"), "adam_eps")?.unwrap_or(od.adam_eps),
        grad_clip_norm: match get("grad_clip_norm") {
            None => od.grad_clip_norm,
            Some((_, v)) if v == "none" => None,
            entry => parse(entry, "grad_clip_norm")?,
        },
        curve_checkpoints: parse(get("curve_checkpoints"), "curve_checkpoints")?.unwrap_or(od.curve_checkpoints),
    };

    let boundary = match get("boundary") {
        None => None,
        Some((line, v)) => Some(match v.as_str() {
            "sticky" => Boundary::Sticky,
            "slip" => Boundary::SlipBox,
            other => {
                return Err(ConfigError::BadValue {
                    line,
                    key: "boundary".into(),
                    detail: format!("`{other}` is not `sticky` or `slip`"),
                })
            }
        }),
    };
    let sim = SimOverrides {
        grid_res: parse(get("grid_res"), "grid_res")?,
        dt: parse(get("dt"), "dt")?,
        n_steps: parse(get("n_steps"), "n_steps")?,
        substeps_per_frame: parse(get("substeps_per_frame"), "substeps_per_frame")?,
        boundary,
        seed: parse(get("seed"), "seed")?,
    };

    Ok(RunConfig { task, backend, outdir, search, opt, sim })
}

/// Canonical text form; `parse_config` on the output reproduces the config.
pub fn print_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("task = {}\n", cfg.task.letter()));
    match &cfg.backend {
        BackendConfig::Http { endpoint, model } => {
            out.push_str("backend = http\n");
            out.push_str(&format!("endpoint = {endpoint}\n"));
            out.push_str(&format!("model = {model}\n"));
        }
        BackendConfig::Scripted { script } => {
            out.push_str("backend = scripted\n");
            out.push_str(&format!("script = {}\n", script.display()));
        }
    }
    out.push_str(&format!("outdir = {}\n", cfg.outdir.display()));
    let s = &cfg.search;
    out.push_str(&format!("n_iterations = {}\n", s.n_iterations));
    out.push_str(&format!("history_k = {}\n", s.history_k));
    out.push_str(&format!("n_exploit = {}\n", s.n_exploit));
    out.push_str(&format!("n_explore = {}\n", s.n_explore));
    out.push_str(&format!("temp_exploit = {}\n", s.temp_exploit));
    out.push_str(&format!("temp_explore = {}\n", s.temp_explore));
    out.push_str(&format!("heap_capacity = {}\n", s.heap_capacity));
    out.push_str(&format!("root_seed = {}\n", s.root_seed));
    let o = &cfg.opt;
    out.push_str(&format!("opt_steps = {}\n", o.n_steps));
    out.push_str(&format!("learning_rate = {}\n", o.learning_rate));
    out.push_str(&format!("adam_beta1 = {}\n", o.adam_beta1));
    out.push_str(&format!("adam_beta2 = {}\n", o.adam_beta2));
    out.push_str(&format!("adam_eps = {}\n", o.adam_eps));
    match o.grad_clip_norm {
        Some(v) => out.push_str(&format!("grad_clip_norm = {v}\n")),
        None => out.push_str("grad_clip_norm = none\n"),
    }
    out.push_str(&format!("curve_checkpoints = {}\n", o.curve_checkpoints));
    let v = &cfg.sim;
    if let Some(x) = v.grid_res {
        out.push_str(&format!("grid_res = {x}\n"));
    }
    if let Some(x) = v.dt {
        out.push_str(&format!("dt = {x}\n"));
    }
    if let Some(x) = v.n_steps {
        out.push_str(&format!("n_steps = {x}\n"));
    }
    if let Some(x) = v.substeps_per_frame {
        out.push_str(&format!("substeps_per_frame = {x}\n"));
    }
    if let Some(b) = v.boundary {
        out.push_str(&format!(
            "boundary = {}\n",
            if b == Boundary::Sticky { "sticky" } else { "slip" }
        ));
    }
    if let Some(x) = v.seed {
        out.push_str(&format!("seed = {x}\n"));
    }
    out
}

/// Applies the overrides onto a task's simulation config.
pub fn apply_overrides(mut sim: crate::mpm::SimConfig, ov: &SimOverrides) -> crate::mpm::SimConfig {
    if let Some(x) = ov.grid_res {
        sim.grid_res = x;
    }
    if let Some(x) = ov.dt {
        sim.dt = x;
    }
    if let Some(x) = ov.n_steps {
        sim.n_steps = x;
    }
    if let Some(x) = ov.substeps_per_frame {
        sim.substeps_per_frame = x;
    }
    if let Some(x) = ov.boundary {
        sim.boundary = x;
    }
    if let Some(x) = ov.seed {
        sim.seed = x;
    }
    sim
}
