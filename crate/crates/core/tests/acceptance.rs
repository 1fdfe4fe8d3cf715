//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert.
//!
//! The report goes to stderr even without `--nocapture`. The test profile
//! is optimized, so the long chains here take well under a minute each.

use std::collections::HashMap;
use std::io::Write;
use std::time::{Duration, Instant};

use bandperm::analysis::{band_structure_stat, fit_decay, max_propagating_c0, recurrence_check, DiamHistogram, FitWindow};
use bandperm::exact::exact_distribution;
use bandperm::sampler::{run_chain, sample_cycle_observables, SamplerConfig};
use bandperm::verify::{verify_exponent, verify_uncrossing, CheckCount, ExponentReport};
use bandperm::{Exponent, ModelParams};

/// Writes to the stderr handle directly so the report shows up even when the
/// harness captures test output.
fn say(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, id: usize, ok: bool, detail: String) {
        say(&format!("criterion {id:>2}: {} {detail}", if ok { "PASS" } else { "FAIL" }));
        self.lines.push((id, ok, detail));
    }
}

fn clean(c: Option<CheckCount>) -> bool {
    c.is_some_and(|c| c.violations == 0)
}

fn count(c: Option<CheckCount>) -> String {
    c.map_or("n/a".into(), |c| format!("{}/{}", c.violations, c.checked))
}

/// Empirical distribution of retained states.
fn empirical(params: &ModelParams, steps: u64, seed: u64) -> (HashMap<Vec<i64>, f64>, Duration) {
    let start = Instant::now();
    let cfg = SamplerConfig::with_defaults(params, seed, steps);
    let mut counts: HashMap<Vec<i64>, u64> = HashMap::new();
    let s = run_chain(params, &cfg, |_, pi| *counts.entry(pi.images().to_vec()).or_default() += 1).unwrap();
    let total = s.retained_samples as f64;
    let freq = counts.into_iter().map(|(k, c)| (k, c as f64 / total)).collect();
    (freq, start.elapsed())
}

fn oracle_agreement(r: &mut Report) {
    let params = ModelParams::finite(1.0, 1, 1).unwrap();
    let exact = exact_distribution(&params).unwrap();
    let (freq, took) = empirical(&params, 1_000_000, 1);
    let tv = 0.5
        * exact
            .entries
            .iter()
            .map(|(pi, pr)| (freq.get(pi.images()).copied().unwrap_or(0.0) - pr).abs())
            .sum::<f64>();
    let p_id = exact.probability(&bandperm::Permutation::identity(1));
    r.record(
        1,
        tv <= 0.02 && took < Duration::from_secs(10) && (p_id - 0.7544).abs() < 1e-3,
        format!("TV = {tv:.4}, P(identity) = {p_id:.4}, {:.2}s", took.as_secs_f64()),
    );
}

fn uniform_band(r: &mut Report) {
    let params = ModelParams::infinite(1, 1).unwrap();
    let (freq, _) = empirical(&params, 1_000_000, 2);
    let worst = freq.values().map(|f| (f - 1.0 / 3.0).abs()).fold(0.0, f64::max);
    r.record(
        2,
        freq.len() == 3 && worst <= 0.01,
        format!("{} states, max |freq - 1/3| = {worst:.4}", freq.len()),
    );
}

fn image_membership(r: &mut Report) {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for w in [1, 2] {
        let rep = verify_exponent(&ModelParams::infinite(w, 3).unwrap()).unwrap();
        ok &= clean(rep.image_membership) && clean(rep.image_membership_all_thresholds);
        parts.push(format!(
            "W={w} n=3 {} (all t: {})",
            count(rep.image_membership),
            count(rep.image_membership_all_thresholds)
        ));
    }
    // at 2n+1 = 7 no instance has a crossing above lambda + 2W; larger
    // intervals exercise the property for real
    for n in [5, 6, 7] {
        let rep = verify_exponent(&ModelParams::infinite(2, n).unwrap()).unwrap();
        let c = rep.image_membership.unwrap();
        ok &= c.violations == 0 && c.checked > 0;
        parts.push(format!("W=2 n={n} {}", count(rep.image_membership)));
    }
    let took = start.elapsed();
    ok &= took < Duration::from_secs(60);
    r.record(3, ok, format!("violations/checked: {}; {:.1}s", parts.join(", "), took.as_secs_f64()));
}

fn preimage_bound(r: &mut Report) {
    let mut ok = true;
    let mut parts = Vec::new();
    for w in [1, 2, 3] {
        let rep = verify_exponent(&ModelParams::infinite(w, 3).unwrap()).unwrap();
        ok &= clean(rep.preimage_cardinality) && rep.preimage_exactness.violations == 0;
        ok &= rep.max_preimage_size <= (w * w) as usize;
        parts.push(format!(
            "W={w} max |preimage| = {} exactness {}",
            rep.max_preimage_size,
            count(Some(rep.preimage_exactness))
        ));
    }
    r.record(4, ok, parts.join(", "));
}

fn finite_reports() -> Vec<(u32, ExponentReport)> {
    let ps: Vec<Exponent> = [1.0, 1.5, 2.0, 4.0].iter().map(|&p| Exponent::Finite(p)).collect();
    [1, 2]
        .into_iter()
        .flat_map(|w| verify_uncrossing(3, w, &ps).unwrap().reports.into_iter().map(move |rep| (w, rep)))
        .collect()
}

fn ratio_inequality(r: &mut Report, reports: &[(u32, ExponentReport)]) {
    let ok = reports.iter().all(|(_, rep)| clean(rep.crossing_ratio));
    let checked: u64 = reports.iter().map(|(_, rep)| rep.crossing_ratio.unwrap().checked).sum();
    let worst = reports
        .iter()
        .filter_map(|(_, rep)| rep.max_ratio_over_bound)
        .fold(0.0, f64::max);
    r.record(5, ok && checked > 0, format!("{checked} instances, max ratio/bound = {worst:.4}"));
}

fn energy_monotonicity(r: &mut Report, reports: &[(u32, ExponentReport)]) {
    let sel: Vec<_> = reports
        .iter()
        .filter(|(_, rep)| matches!(rep.p, Exponent::Finite(p) if p == 1.0 || p == 2.0))
        .collect();
    let ok = sel.iter().all(|(_, rep)| clean(rep.energy_monotonicity));
    let checked: u64 = sel.iter().map(|(_, rep)| rep.energy_monotonicity.unwrap().checked).sum();
    r.record(6, ok && checked > 0, format!("{checked} crossing instances, 0 increases required"));
}

fn recurrence(r: &mut Report) {
    let rates: Vec<f64> = (1..=8u32)
        .map(|w| max_propagating_c0(1.0, w, 1.0, 50 * (w as u64).pow(3), 1e-4))
        .collect();
    let floor = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let control = recurrence_check(1.0, 4, 1.0, 10.0, 50 * 64);
    let shown: Vec<String> = rates.iter().map(|c| format!("{c:.3}")).collect();
    r.record(
        7,
        floor >= 0.1 && !control.propagated,
        format!(
            "c0*(1..8) = [{}], min {floor:.3}; c0 = 10 control fails at k = {:?}",
            shown.join(", "),
            control.first_failure_k
        ),
    );
}

fn tail_decay(r: &mut Report) {
    let params = ModelParams::infinite(2, 200).unwrap();
    let grid: Vec<u64> = (0..=40).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in [1, 2, 3] {
        let cfg = SamplerConfig::with_defaults(&params, seed, 100_000_000);
        let mut hist = DiamHistogram::new();
        sample_cycle_observables(&params, &cfg, 0, |rec| hist.push(rec.diam)).unwrap();
        let curve = hist.curve(params, 0, &grid).unwrap();
        let window = FitWindow::default();
        match fit_decay(&curve, &window) {
            Ok(fit) => {
                let inside = bandperm::analysis::window_points(&curve, &window)
                    .all(|pt| pt.survival <= fit.envelope(pt.lambda) * (1.0 + 1e-12));
                ok &= fit.decay_rate_c_hat > 0.0 && fit.r_squared >= 0.9 && fit.c_envelope > 0.0 && inside;
                parts.push(format!(
                    "seed {seed}: slope {:.3} R2 {:.3} c_env {:.2} window {:?}",
                    fit.decay_rate_c_hat, fit.r_squared, fit.c_envelope, fit.window
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("seed {seed}: {e}"));
            }
        }
    }
    r.record(8, ok, parts.join("; "));
}

fn band_structure(r: &mut Report) {
    let start = Instant::now();
    let ws = [2u32, 4, 8, 16];
    let means: Vec<(u32, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = ws
            .iter()
            .map(|&w| {
                s.spawn(move || {
                    let params = ModelParams::finite(1.0, w, 50 * w).unwrap();
                    let cfg = SamplerConfig::with_defaults(&params, 1, 200_000_000);
                    let (mut sum, mut k) = (0u64, 0u64);
                    sample_cycle_observables(&params, &cfg, 0, |rec| {
                        sum += rec.displacement0;
                        k += 1;
                    })
                    .unwrap();
                    (w, sum as f64 / k as f64)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let fit = band_structure_stat(&means).unwrap();
    let took = start.elapsed();
    let shown: Vec<String> = means.iter().map(|(w, m)| format!("W={w}: {m:.3}")).collect();
    r.record(
        9,
        (fit.exponent - 1.0).abs() <= 0.15 && took < Duration::from_secs(600),
        format!("slope {:.3} ({}); {:.1}s", fit.exponent, shown.join(", "), took.as_secs_f64()),
    );
}

fn determinism(r: &mut Report) {
    let params = ModelParams::finite(1.5, 2, 12).unwrap();
    let stream = |seed: u64, s: u64| {
        let mut cfg = SamplerConfig::with_defaults(&params, seed, 200_000);
        cfg.stream = s;
        let mut bytes: Vec<u8> = Vec::new();
        run_chain(&params, &cfg, |step, pi| {
            bytes.extend_from_slice(&step.to_le_bytes());
            for x in pi.images() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        })
        .unwrap();
        bytes
    };
    let a = stream(7, 0);
    let same = a == stream(7, 0);
    let differs = a != stream(7, 1) && a != stream(8, 0);
    r.record(
        10,
        same && differs && !a.is_empty(),
        format!("{} bytes identical across runs, other seed/stream differ: {differs}", a.len()),
    );
}

#[test]
fn acceptance() {
    let mut r = Report { lines: Vec::new() };
    oracle_agreement(&mut r);
    uniform_band(&mut r);
    image_membership(&mut r);
    preimage_bound(&mut r);
    let reports = finite_reports();
    ratio_inequality(&mut r, &reports);
    energy_monotonicity(&mut r, &reports);
    recurrence(&mut r);
    tail_decay(&mut r);
    band_structure(&mut r);
    determinism(&mut r);
    let failed: Vec<usize> = r.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    say(&format!("{} of {} criteria passed", r.lines.len() - failed.len(), r.lines.len()));
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
