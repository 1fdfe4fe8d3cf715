//! Run configuration: a JSON document merged with command-line overrides.
//!
//! Keys are resolved one at a time so that every error names the key that
//! caused it. Flags win over file values; anything left unset takes the
//! defaults documented on [`RunConfig`].

use std::path::PathBuf;

use bandperm::analysis::{default_lambda_grid, FitWindow};
use bandperm::sampler::{default_burn_in, InitialState, SamplerConfig};
use bandperm::{Exponent, ModelParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

pub const FORMAT_VERSION: &str = "bandperm-artifacts/1";
pub const OUTPUT_DIR_ENV: &str = "BANDPERM_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "bandperm-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Exact,
    Sample,
    Tail,
    UncrossVerify,
    Sweep,
    Recurrence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Exact => "exact",
            Command::Sample => "sample",
            Command::Tail => "tail",
            Command::UncrossVerify => "uncross-verify",
            Command::Sweep => "sweep",
            Command::Recurrence => "recurrence",
        }
    }
}

/// Fully resolved configuration. Serialized into every run manifest;
/// `output_dir` is excluded so runs written to different directories
/// produce identical bytes.
///
/// Defaults: `p = 1`, `W = 1`, `n = 1`, `seed = 0`, `steps = 1_000_000`,
/// `burn_in = 10 (2n+1) W`, `thinning = 2n+1`, `initial_state = IDENTITY`,
/// `j = 0`, `lambda_grid = {0..min(2n, 20 W^3)}` thinned to 64 points,
/// `p_list = [inf, 1, 2]`, `w_grid = [2, 4, 8]`, `seeds = [seed]`,
/// `workers = 4`, `C0 = 1`, `k_factor = 50`, fit head `2W`, fit minimum
/// of 10 expected exceedances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub params: ModelParams,
    pub seed: u64,
    pub steps: u64,
    /// `None` means `10 (2n+1) W` for each simulated instance.
    pub burn_in: Option<u64>,
    /// `None` means `2n+1` for each simulated instance.
    pub thinning: Option<u64>,
    pub initial_state: InitialState,
    pub j: i64,
    pub lambda_grid: Vec<u64>,
    pub p_list: Vec<Exponent>,
    pub w_grid: Vec<u32>,
    pub seeds: Vec<u64>,
    /// Sweep only: use `n = n_per_w * W` for each bandwidth instead of `n`.
    pub n_per_w: Option<u32>,
    pub workers: usize,
    #[serde(rename = "C0")]
    pub big_c0: f64,
    pub c0: Option<f64>,
    pub k_factor: u64,
    pub fit_window: FitWindow,
    /// Sweep at `p = inf`: threshold for the preimage-size probe; `None`
    /// means `2W`.
    pub preimage_threshold: Option<i64>,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Sampler settings for one instance; chain `stream` of a sweep.
    pub fn sampler_for(&self, params: &ModelParams, seed: u64, stream: u64) -> Result<SamplerConfig, CliError> {
        let burn_in = self
            .burn_in
            .unwrap_or_else(|| default_burn_in(params).min(self.steps.saturating_sub(1)));
        let thinning = self.thinning.unwrap_or(params.size() as u64);
        if self.steps > 0 && burn_in >= self.steps {
            return Err(CliError::config(
                "burn_in",
                format!("burn_in ({burn_in}) must be < steps ({})", self.steps),
            ));
        }
        Ok(SamplerConfig {
            seed,
            stream,
            steps: self.steps,
            burn_in,
            thinning,
            initial_state: self.initial_state,
            verify_energy: false,
        })
    }
}

const KNOWN_KEYS: &[&str] = &[
    "command",
    "p",
    "W",
    "n",
    "seed",
    "steps",
    "burn_in",
    "thinning",
    "initial_state",
    "j",
    "lambda_grid",
    "p_list",
    "w_grid",
    "seeds",
    "n_per_w",
    "workers",
    "C0",
    "c0",
    "k_factor",
    "fit_head",
    "fit_min_exceedances",
    "preimage_threshold",
    "output_dir",
    // manifest form of a resolved config
    "params",
    "fit_window",
];

fn take<T: DeserializeOwned>(doc: &Map<String, Value>, key: &str) -> Result<Option<T>, CliError> {
    match doc.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| CliError::config(key, e.to_string())),
    }
}

/// Parses a configuration document (JSON object text; empty means `{}`) and
/// applies `overrides`, which use the same keys as the document.
pub fn parse_config(document: &str, overrides: &Map<String, Value>) -> Result<RunConfig, CliError> {
    let mut doc: Map<String, Value> = if document.trim().is_empty() {
        Map::new()
    } else {
        match serde_json::from_str::<Value>(document) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(CliError::config("<document>", "expected a JSON object")),
            Err(e) => return Err(CliError::config("<document>", e.to_string())),
        }
    };
    // a manifest nests the model under "params" and the fit settings under
    // "fit_window"; flatten them so manifests parse back
    if let Some(Value::Object(params)) = doc.remove("params") {
        for (k, v) in params {
            doc.entry(k).or_insert(v);
        }
    }
    if let Some(Value::Object(fw)) = doc.remove("fit_window") {
        if let Some(v) = fw.get("head") {
            doc.entry("fit_head".to_string()).or_insert(v.clone());
        }
        if let Some(v) = fw.get("min_exceedances") {
            doc.entry("fit_min_exceedances".to_string()).or_insert(v.clone());
        }
    }
    for (k, v) in overrides {
        doc.insert(k.clone(), v.clone());
    }
    if let Some(key) = doc.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(CliError::config(key, "unknown key"));
    }

    let command: Command = take(&doc, "command")?
        .ok_or_else(|| CliError::config("command", "missing command"))?;
    let p: Exponent = take(&doc, "p")?.unwrap_or(Exponent::Finite(1.0));
    let w: u32 = take(&doc, "W")?.unwrap_or(1);
    let n: u32 = take(&doc, "n")?.unwrap_or(1);
    if w < 1 {
        return Err(CliError::config("W", "W must be >= 1"));
    }
    if n < 1 {
        return Err(CliError::config("n", "n must be >= 1"));
    }
    let params = ModelParams::new(p, w, n).map_err(|e| CliError::config("p", e.to_string()))?;

    let seed: u64 = take(&doc, "seed")?.unwrap_or(0);
    let steps: u64 = take(&doc, "steps")?.unwrap_or(1_000_000);
    let burn_in: Option<u64> = take(&doc, "burn_in")?;
    let thinning: Option<u64> = take(&doc, "thinning")?;
    if thinning == Some(0) {
        return Err(CliError::config("thinning", "thinning must be >= 1"));
    }
    if let Some(b) = burn_in {
        if (steps > 0 && b >= steps) || (steps == 0 && b > 0) {
            return Err(CliError::config("burn_in", format!("burn_in ({b}) must be < steps ({steps})")));
        }
    }
    let initial_state = take(&doc, "initial_state")?.unwrap_or_default();
    let j: i64 = take(&doc, "j")?.unwrap_or(0);
    if j.unsigned_abs() > n as u64 {
        return Err(CliError::config("j", format!("j = {j} lies outside [-{n}, {n}]")));
    }
    let lambda_grid: Vec<u64> = take(&doc, "lambda_grid")?.unwrap_or_else(|| default_lambda_grid(&params));
    if lambda_grid.is_empty() {
        return Err(CliError::config("lambda_grid", "grid must be nonempty"));
    }
    let p_list: Vec<Exponent> =
        take(&doc, "p_list")?.unwrap_or_else(|| vec![Exponent::Infinite, Exponent::Finite(1.0), Exponent::Finite(2.0)]);
    if p_list.is_empty() {
        return Err(CliError::config("p_list", "list must be nonempty"));
    }
    let w_grid: Vec<u32> = take(&doc, "w_grid")?.unwrap_or_else(|| vec![2, 4, 8]);
    if w_grid.is_empty() || w_grid.contains(&0) {
        return Err(CliError::config("w_grid", "grid must be nonempty with every W >= 1"));
    }
    let seeds: Vec<u64> = take(&doc, "seeds")?.unwrap_or_else(|| vec![seed]);
    if seeds.is_empty() {
        return Err(CliError::config("seeds", "list must be nonempty"));
    }
    let n_per_w: Option<u32> = take(&doc, "n_per_w")?;
    if n_per_w == Some(0) {
        return Err(CliError::config("n_per_w", "must be >= 1"));
    }
    let workers: usize = take(&doc, "workers")?.unwrap_or(4);
    if workers == 0 {
        return Err(CliError::config("workers", "must be >= 1"));
    }
    let big_c0: f64 = take(&doc, "C0")?.unwrap_or(1.0);
    if !(big_c0 > 0.0) {
        return Err(CliError::config("C0", "must be > 0"));
    }
    let c0: Option<f64> = take(&doc, "c0")?;
    if matches!(c0, Some(c) if !(c >= 0.0)) {
        return Err(CliError::config("c0", "must be >= 0"));
    }
    let k_factor: u64 = take(&doc, "k_factor")?.unwrap_or(50);
    if k_factor == 0 {
        return Err(CliError::config("k_factor", "must be >= 1"));
    }
    let fit_window = FitWindow {
        head: take(&doc, "fit_head")?,
        min_exceedances: take(&doc, "fit_min_exceedances")?.unwrap_or(10.0),
    };
    let preimage_threshold: Option<i64> = take(&doc, "preimage_threshold")?;
    if command == Command::Recurrence && p.is_infinite() {
        return Err(CliError::config("p", "recurrence requires a finite p"));
    }
    let output_dir: PathBuf = take::<String>(&doc, "output_dir")?
        .map(PathBuf::from)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));

    Ok(RunConfig {
        command,
        params,
        seed,
        steps,
        burn_in,
        thinning,
        initial_state,
        j,
        lambda_grid,
        p_list,
        w_grid,
        seeds,
        n_per_w,
        workers,
        big_c0,
        c0,
        k_factor,
        fit_window,
        preimage_threshold,
        output_dir,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub format_version: &'static str,
    pub config: &'a RunConfig,
}

impl RunConfig {
    pub fn manifest(&self) -> Manifest<'_> {
        Manifest {
            format_version: FORMAT_VERSION,
            config: self,
        }
    }
}
