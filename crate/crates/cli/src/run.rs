//! Command dispatch and artifact writing.
//!
//! Every command writes into `output_dir` only: CSV for row data, JSON for
//! summaries, and a `manifest.json` listing the artifacts. Each JSON
//! artifact embeds the same manifest, so any single file is enough to
//! reproduce its run. Nothing time- or machine-dependent is written.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bandperm::analysis::{
    band_structure_stat, block_jackknife_mean, fit_decay, fit_power_law, max_propagating_c0,
    preimage_size_stats, recurrence_check, DecayFit, DiamHistogram, PowerFit, PreimageHistogram,
    RecurrenceOutcome, TailCurve,
};
use bandperm::exact::{exact_tail_curve, FINITE_CAP};
use bandperm::sampler::{run_chain, sample_cycle_observables, CycleRecord};
use bandperm::verify::verify_uncrossing;
use bandperm::{Exponent, ModelParams};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, RunConfig};
use crate::error::CliError;

const MIXING_NOTE: &str = "chain length adequacy is established empirically (exact-oracle total-variation tests and doubling-steps stability); no mixing-time bound is assumed";

/// Blocks used for jackknife error bars on chain means.
const JACKKNIFE_BLOCKS: usize = 20;

/// Tolerance of the bisection for the largest propagating decay rate.
const C0_TOLERANCE: f64 = 1e-4;

pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        debug_assert!(!name.contains('/'));
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, value)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    fn csv(&mut self, name: &str) -> Result<csv::Writer<File>, CliError> {
        let path = self.path(name);
        Ok(csv::Writer::from_path(path)?)
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }
}

/// Encodes `(p, W, n)` and optionally the seed for file names.
pub fn tag(params: &ModelParams, seed: Option<u64>) -> String {
    let mut s = format!("p{}_W{}_n{}", params.p, params.w, params.n);
    if let Some(seed) = seed {
        s.push_str(&format!("_seed{seed}"));
    }
    s
}

/// Runs the configured command and returns the artifact file names.
pub fn run(config: &RunConfig) -> Result<Vec<String>, CliError> {
    let mut art = Artifacts::new(&config.output_dir)?;
    let outcome = match config.command {
        Command::Exact => run_exact(config, &mut art),
        Command::Sample => run_sample(config, &mut art),
        Command::Tail => run_tail(config, &mut art),
        Command::UncrossVerify => run_uncross_verify(config, &mut art),
        Command::Sweep => run_sweep(config, &mut art),
        Command::Recurrence => run_recurrence(config, &mut art),
    };
    // the manifest is written even when verification fails
    let files = art.files().to_vec();
    art.json(
        "manifest.json",
        &json!({
            "manifest": config.manifest(),
            "artifacts": files,
        }),
    )?;
    outcome?;
    Ok(art.files().to_vec())
}

fn run_exact(config: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let params = config.params;
    let tail = exact_tail_curve(&params, config.j, &config.lambda_grid)?;
    let name = tag(&params, None);
    let mut w = art.csv(&format!("exact_{name}.csv"))?;
    w.write_record(["lambda", "tail_probability"])?;
    for (l, t) in tail.grid.iter().zip(&tail.tail) {
        w.serialize((l, t))?;
    }
    w.flush()?;
    art.json(
        &format!("exact_{name}.json"),
        &json!({
            "manifest": config.manifest(),
            "j": config.j,
            "partition_value": tail.partition_value,
            "support_size": tail.support_size,
        }),
    )
}

fn run_sample(config: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let params = config.params;
    let sampler = config.sampler_for(&params, config.seed, 0)?;
    let name = tag(&params, Some(config.seed));
    let mut w = art.csv(&format!("sample_{name}.csv"))?;
    w.write_record(["step_index", "diam", "displacement0", "maxC0", "minC0"])?;
    let mut hist = DiamHistogram::new();
    let mut disp_sum = 0u64;
    let mut write_err = None;
    let summary = sample_cycle_observables(&params, &sampler, config.j, |r: CycleRecord| {
        hist.push(r.diam);
        disp_sum += r.displacement0;
        if write_err.is_none() {
            if let Err(e) = w.serialize((r.step_index, r.diam, r.displacement0, r.max_c0, r.min_c0)) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    w.flush()?;
    let curve = hist.curve(params, config.j, &config.lambda_grid).ok();
    let mean_disp = (summary.retained_samples > 0).then(|| disp_sum as f64 / summary.retained_samples as f64);
    art.json(
        &format!("sample_{name}.json"),
        &json!({
            "manifest": config.manifest(),
            "acceptance_rate": summary.acceptance_rate,
            "retained_samples": summary.retained_samples,
            "mean_displacement0": mean_disp,
            "tail_curve": curve,
            "final_state": summary.final_state,
            "mixing_note": MIXING_NOTE,
        }),
    )
}

fn write_tail_csv(art: &mut Artifacts, name: &str, curve: &TailCurve) -> Result<(), CliError> {
    let mut w = art.csv(name)?;
    w.write_record(["lambda", "survival", "stderr", "count"])?;
    for p in &curve.points {
        w.serialize((p.lambda, p.survival, p.stderr, p.count))?;
    }
    w.flush()?;
    Ok(())
}

fn exact_reference(params: &ModelParams, j: i64, grid: &[u64]) -> Option<Vec<f64>> {
    let small = match params.p {
        Exponent::Finite(_) => params.size() <= FINITE_CAP,
        Exponent::Infinite => params.size() <= 15,
    };
    if !small {
        return None;
    }
    exact_tail_curve(params, j, grid).ok().map(|t| t.tail)
}

fn run_tail(config: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let params = config.params;
    let sampler = config.sampler_for(&params, config.seed, 0)?;
    let mut hist = DiamHistogram::new();
    let mut diams = Vec::new();
    let summary = sample_cycle_observables(&params, &sampler, config.j, |r| {
        hist.push(r.diam);
        diams.push(r.diam as f64);
    })?;
    let curve = hist.curve(params, config.j, &config.lambda_grid)?;
    let (mean, stderr) = block_jackknife_mean(&diams, JACKKNIFE_BLOCKS)?;
    let fit = fit_decay(&curve, &config.fit_window);
    let name = tag(&params, Some(config.seed));
    write_tail_csv(art, &format!("tail_{name}.csv"), &curve)?;
    art.json(
        &format!("tail_{name}.json"),
        &json!({
            "manifest": config.manifest(),
            "acceptance_rate": summary.acceptance_rate,
            "retained_samples": summary.retained_samples,
            "mean_diam": mean,
            "mean_diam_stderr": stderr,
            "fit": fit.as_ref().ok(),
            "fit_error": fit.as_ref().err().map(|e| e.to_string()),
            "exact_tail": exact_reference(&params, config.j, &config.lambda_grid),
            "mixing_note": MIXING_NOTE,
        }),
    )
}

fn run_uncross_verify(config: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let (n, w) = (config.params.n, config.params.w);
    let cert = verify_uncrossing(n, w, &config.p_list)?;
    art.json(
        &format!("uncross_verify_W{w}_n{n}.json"),
        &json!({
            "manifest": config.manifest(),
            "certificate": cert,
        }),
    )?;
    if cert.total_violations > 0 {
        return Err(CliError::Verification(format!(
            "{} invariant violations (see certificate)",
            cert.total_violations
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct SweepJob {
    #[serde(rename = "W")]
    w: u32,
    n: u32,
    seed: u64,
    stream: u64,
    tail_file: String,
    acceptance_rate: f64,
    retained_samples: u64,
    mean_diam: f64,
    mean_diam_stderr: f64,
    mean_displacement0: f64,
    mean_displacement0_stderr: f64,
    decay_fit: Option<DecayFit>,
    decay_fit_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    preimage_sizes: Option<PreimageHistogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    preimage_error: Option<String>,
    #[serde(skip)]
    curve: Option<TailCurve>,
}

fn sweep_job(config: &RunConfig, w: u32, seed: u64, stream: u64) -> Result<SweepJob, CliError> {
    let n = config.n_per_w.map_or(config.params.n, |k| k * w);
    let params = ModelParams::new(config.params.p, w, n)?;
    let sampler = config.sampler_for(&params, seed, stream)?;
    let probe_t = config.preimage_threshold.unwrap_or(2 * w as i64);
    let probe = params.p.is_infinite();

    let mut hist = DiamHistogram::new();
    let mut diams = Vec::new();
    let mut disps = Vec::new();
    let mut taus = Vec::new();
    let j = config.j.clamp(-(n as i64), n as i64);
    let summary = run_chain(&params, &sampler, |step, pi| {
        let r = CycleRecord::of(step, pi, j);
        hist.push(r.diam);
        diams.push(r.diam as f64);
        disps.push(r.displacement0 as f64);
        if probe && r.max_c0 <= probe_t {
            taus.push(pi.clone());
        }
    })?;
    let grid: Vec<u64> = config.lambda_grid.clone();
    let curve = hist.curve(params, j, &grid)?;
    let (mean_diam, mean_diam_stderr) = block_jackknife_mean(&diams, JACKKNIFE_BLOCKS)?;
    let (mean_disp, mean_disp_stderr) = block_jackknife_mean(&disps, JACKKNIFE_BLOCKS)?;
    let fit = fit_decay(&curve, &config.fit_window);
    let (preimage_sizes, preimage_error) = if probe {
        match preimage_size_stats(&params, probe_t, taus) {
            Ok(h) => (Some(h), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    Ok(SweepJob {
        w,
        n,
        seed,
        stream,
        tail_file: format!("sweep_tail_{}.csv", tag(&params, Some(seed))),
        acceptance_rate: summary.acceptance_rate,
        retained_samples: summary.retained_samples,
        mean_diam,
        mean_diam_stderr,
        mean_displacement0: mean_disp,
        mean_displacement0_stderr: mean_disp_stderr,
        decay_fit: fit.as_ref().ok().copied(),
        decay_fit_error: fit.err().map(|e| e.to_string()),
        preimage_sizes,
        preimage_error,
        curve: Some(curve),
    })
}

/// Job `k` in `(W, seed)` grid order runs on ChaCha stream `k`.
fn run_sweep(config: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let specs: Vec<(u32, u64, u64)> = config
        .w_grid
        .iter()
        .flat_map(|&w| config.seeds.iter().map(move |&s| (w, s)))
        .enumerate()
        .map(|(k, (w, s))| (w, s, k as u64))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::config("workers", e.to_string()))?;
    let jobs: Vec<SweepJob> = pool.install(|| {
        specs
            .par_iter()
            .map(|&(w, s, k)| sweep_job(config, w, s, k))
            .collect::<Result<Vec<_>, _>>()
    })?;

    for job in &jobs {
        if let Some(curve) = &job.curve {
            write_tail_csv(art, &job.tail_file, curve)?;
        }
    }

    // per-W averages over seeds
    let mut per_w: Vec<(u32, f64, f64)> = Vec::new();
    for &w in &config.w_grid {
        let js: Vec<&SweepJob> = jobs.iter().filter(|j| j.w == w).collect();
        let k = js.len() as f64;
        per_w.push((
            w,
            js.iter().map(|j| j.mean_diam).sum::<f64>() / k,
            js.iter().map(|j| j.mean_displacement0).sum::<f64>() / k,
        ));
    }
    let diam_pts: Vec<(u32, f64)> = per_w.iter().map(|&(w, d, _)| (w, d)).collect();
    let disp_pts: Vec<(u32, f64)> = per_w.iter().map(|&(w, _, d)| (w, d)).collect();
    let exponent: Result<PowerFit, _> = fit_power_law(&diam_pts);
    let band = (config.params.p == Exponent::Finite(1.0)).then(|| band_structure_stat(&disp_pts));

    let mut summary_rows = art.csv(&format!("sweep_p{}.csv", config.params.p))?;
    summary_rows.write_record(["W", "n", "seed", "mean_diam", "mean_diam_stderr", "mean_displacement0", "decay_rate_c_hat"])?;
    for j in &jobs {
        summary_rows.serialize((
            j.w,
            j.n,
            j.seed,
            j.mean_diam,
            j.mean_diam_stderr,
            j.mean_displacement0,
            j.decay_fit.map(|f| f.decay_rate_c_hat),
        ))?;
    }
    summary_rows.flush()?;

    art.json(
        &format!("sweep_p{}.json", config.params.p),
        &json!({
            "manifest": config.manifest(),
            "jobs": jobs,
            "exponent_fit": exponent.as_ref().ok(),
            "exponent_fit_error": exponent.as_ref().err().map(|e| e.to_string()),
            "exponent_alpha_hat": exponent.as_ref().ok().map(|f| f.exponent),
            "band_structure": band.as_ref().and_then(|b| b.as_ref().ok()),
            "band_structure_error": band.as_ref().and_then(|b| b.as_ref().err()).map(|e| e.to_string()),
            "mixing_note": MIXING_NOTE,
        }),
    )
}

#[derive(Debug, Clone, Serialize)]
struct RecurrenceRow {
    #[serde(rename = "W")]
    w: u32,
    k_max: u64,
    c0_star: f64,
    c0_star_w3: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    at_c0: Option<RecurrenceOutcome>,
}

fn run_recurrence(config: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let p = config
        .params
        .p
        .finite()
        .ok_or_else(|| CliError::config("p", "recurrence requires a finite p"))?;
    let rows: Vec<RecurrenceRow> = config
        .w_grid
        .par_iter()
        .map(|&w| {
            let k_max = config.k_factor * (w as u64).pow(3);
            let c0_star = max_propagating_c0(p, w, config.big_c0, k_max, C0_TOLERANCE);
            RecurrenceRow {
                w,
                k_max,
                c0_star,
                c0_star_w3: c0_star * (w as f64).powi(3),
                at_c0: config.c0.map(|c0| recurrence_check(p, w, config.big_c0, c0, k_max)),
            }
        })
        .collect();
    let mut w = art.csv(&format!("recurrence_p{}.csv", config.params.p))?;
    w.write_record(["W", "k_max", "c0_star", "c0_star_w3"])?;
    for r in &rows {
        w.serialize((r.w, r.k_max, r.c0_star, r.c0_star_w3))?;
    }
    w.flush()?;
    let min_c0 = rows.iter().map(|r| r.c0_star).fold(f64::INFINITY, f64::min);
    art.json(
        &format!("recurrence_p{}.json", config.params.p),
        &json!({
            "manifest": config.manifest(),
            "rows": rows,
            "min_c0_star": min_c0,
        }),
    )
}
