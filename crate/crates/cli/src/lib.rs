//! Command-line front end: configuration, artifact writing, dispatch.

pub mod config;
pub mod error;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

pub use config::{parse_config, Command, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "bandperm", about = "Band-limited random permutations: exact oracle, sampler, uncrossing checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Exact tail probabilities by enumeration (small instances only).
    Exact(Flags),
    /// Run one chain and write per-sample cycle observables.
    Sample(Flags),
    /// Estimate the diameter tail of one chain and fit its decay.
    Tail(Flags),
    /// Exhaustively check the uncrossing map on a small instance.
    UncrossVerify(Flags),
    /// Tail estimates over a grid of bandwidths and seeds.
    Sweep(Flags),
    /// Largest decay rate that the tail recurrence propagates, per W.
    Recurrence(Flags),
}

impl Sub {
    pub fn split(self) -> (Command, Flags) {
        match self {
            Sub::Exact(f) => (Command::Exact, f),
            Sub::Sample(f) => (Command::Sample, f),
            Sub::Tail(f) => (Command::Tail, f),
            Sub::UncrossVerify(f) => (Command::UncrossVerify, f),
            Sub::Sweep(f) => (Command::Sweep, f),
            Sub::Recurrence(f) => (Command::Recurrence, f),
        }
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to defaults. Lists are comma separated.
#[derive(Debug, Default, Args)]
pub struct Flags {
    /// JSON config file (a previous run's manifest also works).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Exponent: a number >= 1 or `inf`.
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long = "W", short = 'W')]
    pub w: Option<u32>,
    #[arg(long, short = 'n')]
    pub n: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long)]
    pub thinning: Option<u64>,
    /// IDENTITY or RANDOM_IN_SUPPORT.
    #[arg(long)]
    pub initial_state: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub j: Option<i64>,
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long)]
    pub p_list: Option<String>,
    #[arg(long)]
    pub w_grid: Option<String>,
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub n_per_w: Option<u32>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long = "C0")]
    pub big_c0: Option<f64>,
    #[arg(long)]
    pub c0: Option<f64>,
    #[arg(long)]
    pub k_factor: Option<u64>,
    #[arg(long)]
    pub fit_head: Option<u64>,
    #[arg(long)]
    pub fit_min_exceedances: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub preimage_threshold: Option<i64>,
    /// Defaults to $BANDPERM_OUTPUT_DIR, then `bandperm-out`.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

fn number_list(key: &str, s: &str) -> Result<Value, CliError> {
    let items = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<i64>()
                .map(Value::from)
                .map_err(|_| CliError::config(key, format!("`{t}` is not an integer")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Value::Array(items))
}

fn exponent_value(key: &str, t: &str) -> Result<Value, CliError> {
    if t.eq_ignore_ascii_case("inf") {
        return Ok(Value::from("inf"));
    }
    t.parse::<f64>()
        .map(Value::from)
        .map_err(|_| CliError::config(key, format!("`{t}` is not a number or `inf`")))
}

impl Flags {
    /// Converts set flags into config overrides keyed like the file.
    pub fn overrides(&self, command: Command) -> Result<Map<String, Value>, CliError> {
        let mut m = Map::new();
        m.insert("command".into(), Value::from(command.name()));
        macro_rules! put {
            ($key:expr, $v:expr) => {
                if let Some(v) = &$v {
                    m.insert($key.into(), serde_json::to_value(v)?);
                }
            };
        }
        if let Some(p) = &self.p {
            m.insert("p".into(), exponent_value("p", p.trim())?);
        }
        put!("W", self.w);
        put!("n", self.n);
        put!("seed", self.seed);
        put!("steps", self.steps);
        put!("burn_in", self.burn_in);
        put!("thinning", self.thinning);
        put!("initial_state", self.initial_state);
        put!("j", self.j);
        if let Some(s) = &self.lambda_grid {
            m.insert("lambda_grid".into(), number_list("lambda_grid", s)?);
        }
        if let Some(s) = &self.p_list {
            let items = s
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| exponent_value("p_list", t))
                .collect::<Result<Vec<_>, _>>()?;
            m.insert("p_list".into(), Value::Array(items));
        }
        if let Some(s) = &self.w_grid {
            m.insert("w_grid".into(), number_list("w_grid", s)?);
        }
        if let Some(s) = &self.seeds {
            m.insert("seeds".into(), number_list("seeds", s)?);
        }
        put!("n_per_w", self.n_per_w);
        put!("workers", self.workers);
        put!("C0", self.big_c0);
        put!("c0", self.c0);
        put!("k_factor", self.k_factor);
        put!("fit_head", self.fit_head);
        put!("fit_min_exceedances", self.fit_min_exceedances);
        put!("preimage_threshold", self.preimage_threshold);
        if let Some(d) = &self.output_dir {
            m.insert("output_dir".into(), Value::from(d.to_string_lossy().into_owned()));
        }
        Ok(m)
    }

    /// Reads the config file (if any) and merges the flags over it.
    pub fn resolve(&self, command: Command) -> Result<RunConfig, CliError> {
        let doc = match &self.config {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?,
            None => String::new(),
        };
        let doc = strip_manifest(&doc)?;
        parse_config(&doc, &self.overrides(command)?)
    }
}

/// A manifest wraps the config as `{"format_version": .., "config": {..}}`;
/// unwrap it so a manifest can be fed back as `--config`. Artifacts that
/// embed a manifest under `"manifest"` are accepted too.
fn strip_manifest(doc: &str) -> Result<String, CliError> {
    if doc.trim().is_empty() {
        return Ok(String::new());
    }
    let v: Value = serde_json::from_str(doc).map_err(|e| CliError::config("config", e.to_string()))?;
    let v = match v {
        Value::Object(mut m) if m.contains_key("manifest") => m.remove("manifest").unwrap(),
        other => other,
    };
    let v = match v {
        Value::Object(mut m) if m.contains_key("format_version") && m.contains_key("config") => {
            m.remove("config").unwrap()
        }
        other => other,
    };
    Ok(v.to_string())
}
