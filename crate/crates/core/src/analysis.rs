//! Tail curves, decay and scaling fits, preimage statistics, and the
//! recurrence checker that turns the one-step bound into exponential decay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::{ModelParams, Permutation};
use crate::uncross::uncross_preimage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub lambda: u64,
    pub survival: f64,
    pub stderr: f64,
    pub count: u64,
}

/// Empirical `P(diam C_pi(j) >= lambda)` on an increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub params: ModelParams,
    pub j: i64,
    pub points: Vec<TailPoint>,
}

/// Streaming histogram of cycle diameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiamHistogram {
    counts: Vec<u64>,
    total: u64,
    sum: f64,
}

impl DiamHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, diam: u64) {
        let d = diam as usize;
        if d >= self.counts.len() {
            self.counts.resize(d + 1, 0);
        }
        self.counts[d] += 1;
        self.total += 1;
        self.sum += diam as f64;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.total as f64
    }

    pub fn at_least(&self, lambda: u64) -> u64 {
        let lo = (lambda as usize).min(self.counts.len());
        self.counts[lo..].iter().sum()
    }

    pub fn curve(&self, params: ModelParams, j: i64, grid: &[u64]) -> Result<TailCurve> {
        if self.total == 0 {
            return Err(Error::NoData("empty sample stream".into()));
        }
        let mut grid = grid.to_vec();
        grid.sort_unstable();
        grid.dedup();
        let count = self.total;
        let points = grid
            .into_iter()
            .map(|lambda| {
                let s = self.at_least(lambda) as f64 / count as f64;
                TailPoint {
                    lambda,
                    survival: s,
                    stderr: (s * (1.0 - s) / count as f64).sqrt(),
                    count,
                }
            })
            .collect();
        Ok(TailCurve { params, j, points })
    }
}

pub fn estimate_tail_curve(
    params: ModelParams,
    j: i64,
    diams: impl IntoIterator<Item = u64>,
    grid: &[u64],
) -> Result<TailCurve> {
    let mut hist = DiamHistogram::new();
    for d in diams {
        hist.push(d);
    }
    hist.curve(params, j, grid)
}

/// Default grid `{0, ..., min(2n, 20 W^3)}` thinned to at most 64 points.
pub fn default_lambda_grid(params: &ModelParams) -> Vec<u64> {
    let w = params.w as u64;
    let top = (2 * params.n as u64).min(20 * w * w * w);
    let stride = top / 64 + 1;
    let mut grid: Vec<u64> = (0..=top).step_by(stride as usize).collect();
    if grid.len() > 64 {
        grid.truncate(64);
    }
    grid
}

/// Ordinary least squares `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Root mean square of the residuals.
    pub residual: f64,
    pub points: usize,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let k = xs.len();
    if k < 2 || ys.len() != k {
        return Err(Error::Unfittable(format!("need at least 2 points, got {k}")));
    }
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = ys.iter().sum::<f64>() / k as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Unfittable("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
        residual: (ss_res / k as f64).sqrt(),
        points: k,
    })
}

/// Window selection for the decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    /// Points with `lambda <= head` are dropped; `None` means `2W`.
    pub head: Option<u64>,
    /// Points with fewer than this many expected exceedances are dropped.
    pub min_exceedances: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow {
            head: None,
            min_exceedances: 10.0,
        }
    }
}

/// Exponential fit `-log survival ~ intercept + rate * lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    #[serde(rename = "W")]
    pub w: u32,
    /// Fitted slope of `-log survival` in `lambda`.
    pub decay_rate_c_hat: f64,
    /// The slope rescaled to the `exp(-c lambda / W^3)` normalization.
    pub c_hat_w3: f64,
    /// Largest `c` with `survival <= 2 exp(-c lambda / W^3)` at every
    /// window point.
    pub c_envelope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residual: f64,
    pub window: (u64, u64),
    pub points: usize,
}

impl DecayFit {
    /// `2 exp(-c lambda / W^3)` with `c = c_envelope`.
    pub fn envelope(&self, lambda: u64) -> f64 {
        2.0 * (-self.c_envelope * lambda as f64 / (self.w as f64).powi(3)).exp()
    }
}

pub fn window_points<'a>(curve: &'a TailCurve, window: &FitWindow) -> impl Iterator<Item = &'a TailPoint> {
    let head = window.head.unwrap_or(2 * curve.params.w as u64);
    let min_exc = window.min_exceedances;
    curve.points.iter().filter(move |pt| {
        pt.lambda > head
            && pt.survival > 0.0
            && pt.survival < 1.0
            && pt.survival * pt.count as f64 >= min_exc
    })
}

pub fn fit_decay(curve: &TailCurve, window: &FitWindow) -> Result<DecayFit> {
    let pts: Vec<&TailPoint> = window_points(curve, window).collect();
    if pts.len() < 3 {
        return Err(Error::Unfittable(format!(
            "only {} grid points with survival in (0, 1) inside the window",
            pts.len()
        )));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.lambda as f64).collect();
    let ys: Vec<f64> = pts.iter().map(|p| -p.survival.ln()).collect();
    let fit = least_squares(&xs, &ys)?;
    let w = curve.params.w;
    let w3 = (w as f64).powi(3);
    let c_envelope = pts
        .iter()
        .map(|p| w3 * (2.0 / p.survival).ln() / p.lambda as f64)
        .fold(f64::INFINITY, f64::min);
    Ok(DecayFit {
        w,
        decay_rate_c_hat: fit.slope,
        c_hat_w3: fit.slope * w3,
        c_envelope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        residual: fit.residual,
        window: (pts[0].lambda, pts[pts.len() - 1].lambda),
        points: pts.len(),
    })
}

/// Slope of `log y` on `log W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub residual: f64,
    pub window: (u32, u32),
}

pub fn fit_power_law(points: &[(u32, f64)]) -> Result<PowerFit> {
    if let Some(&(w, y)) = points.iter().find(|(_, y)| !(*y > 0.0)) {
        return Err(Error::Unfittable(format!(
            "non-positive mean {y} at W = {w} has no logarithm"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|(w, _)| (*w as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let fit = least_squares(&xs, &ys)?;
    let lo = points.iter().map(|p| p.0).min().unwrap_or(0);
    let hi = points.iter().map(|p| p.0).max().unwrap_or(0);
    Ok(PowerFit {
        exponent: fit.slope,
        prefactor: fit.intercept.exp(),
        r_squared: fit.r_squared,
        residual: fit.residual,
        window: (lo, hi),
    })
}

/// One bandwidth's worth of tail data for the joint fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub curve: TailCurve,
    pub mean_diam: f64,
    pub mean_diam_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub decay: Vec<DecayFit>,
    /// Slope of `log E[diam]` on `log W`.
    pub exponent_alpha_hat: f64,
    pub exponent_fit: PowerFit,
}

pub fn fit_decay_and_exponent(curves: &[CurveSummary], window: &FitWindow) -> Result<FitResult> {
    let decay = curves
        .iter()
        .map(|c| fit_decay(&c.curve, window))
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<(u32, f64)> = curves.iter().map(|c| (c.curve.params.w, c.mean_diam)).collect();
    let exponent_fit = fit_power_law(&means)?;
    Ok(FitResult {
        decay,
        exponent_alpha_hat: exponent_fit.exponent,
        exponent_fit,
    })
}

/// Regression of `log E|pi(0)|` on `log W`; the slope estimates the
/// displacement scaling exponent.
pub fn band_structure_stat(mean_displacements: &[(u32, f64)]) -> Result<PowerFit> {
    fit_power_law(mean_displacements)
}

/// Mean with a delete-one-block jackknife standard error.
pub fn block_jackknife_mean(values: &[f64], blocks: usize) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::NoData("no values".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let blocks = blocks.min(values.len());
    if blocks < 2 {
        return Ok((mean, f64::NAN));
    }
    let size = values.len() / blocks;
    let used = size * blocks;
    let total: f64 = values[..used].iter().sum();
    let block_sums: Vec<f64> = values[..used].chunks(size).map(|c| c.iter().sum()).collect();
    let loo: Vec<f64> = block_sums
        .iter()
        .map(|s| (total - s) / (used - size) as f64)
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / blocks as f64;
    let var = (blocks as f64 - 1.0) / blocks as f64
        * loo.iter().map(|x| (x - loo_mean).powi(2)).sum::<f64>();
    Ok((mean, var.sqrt()))
}

/// Distribution of `|uncross_preimage(tau, t)|` over sampled `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreimageHistogram {
    pub threshold: i64,
    #[serde(rename = "W")]
    pub w: u32,
    /// size -> number of samples.
    pub counts: BTreeMap<usize, u64>,
    pub admissible: u64,
    /// Samples whose cycle of 0 exceeded the threshold.
    pub skipped: u64,
    pub max: usize,
    pub median: usize,
    pub q90: usize,
    pub mean: f64,
}

impl PreimageHistogram {
    fn quantile(&self, q: f64) -> usize {
        let target = (q * self.admissible as f64).ceil().max(1.0) as u64;
        let mut seen = 0;
        for (&size, &c) in &self.counts {
            seen += c;
            if seen >= target {
                return size;
            }
        }
        self.max
    }
}

pub fn preimage_size_stats(
    params: &ModelParams,
    t: i64,
    taus: impl IntoIterator<Item = Permutation>,
) -> Result<PreimageHistogram> {
    let mut counts = BTreeMap::new();
    let (mut admissible, mut skipped, mut sum) = (0u64, 0u64, 0u64);
    for tau in taus {
        if tau.cycle_of(0)?.max > t {
            skipped += 1;
            continue;
        }
        let size = uncross_preimage(&tau, t, params)?.len();
        *counts.entry(size).or_insert(0) += 1;
        admissible += 1;
        sum += size as u64;
    }
    if admissible == 0 {
        return Err(Error::NoData(format!(
            "no sample has its cycle of 0 at or below {t}"
        )));
    }
    let mut hist = PreimageHistogram {
        threshold: t,
        w: params.w,
        max: counts.keys().next_back().copied().unwrap_or(0),
        counts,
        admissible,
        skipped,
        median: 0,
        q90: 0,
        mean: sum as f64 / admissible as f64,
    };
    hist.median = hist.quantile(0.5);
    hist.q90 = hist.quantile(0.9);
    Ok(hist)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceOutcome {
    pub propagated: bool,
    pub first_failure_k: Option<u64>,
    /// Largest `bound(k+1) / f(k+1)` seen over the checked range.
    pub worst_ratio: f64,
}

/// Checks that `f(k) = min(1, 2 exp(-c0 k / W^3))` survives the recurrence
///
/// `p_{k+1} <= (1 - c W^-2) sum_{j=0}^k p_j (w_j - w_{j-1})`,
/// `w_j = exp(-|k-j|^p / W^p)`, `w_{-1} = 0`,
///
/// obtained from `p_{k+1} <= C0 W^2 [-p_{k+1} + sum_j p_j (w_j - w_{j-1})]`
/// by moving `p_{k+1}` to the left: `1 - c W^-2 = C0 W^2 / (1 + C0 W^2)`.
/// The weight increments are nonnegative, so substituting `p_j <= f(j)` for
/// `j <= k` bounds the right side; the check is that it stays `<= f(k+1)`
/// for every `k < k_max`.
pub fn recurrence_check(p: f64, w: u32, big_c0: f64, c0: f64, k_max: u64) -> RecurrenceOutcome {
    let wf = w as f64;
    let w3 = wf.powi(3);
    let factor = big_c0 * wf * wf / (1.0 + big_c0 * wf * wf);
    let f = |k: u64| (2.0 * (-c0 * k as f64 / w3).exp()).min(1.0);

    // g(d) = exp(-(d/W)^p), kept while nonzero; diff(d) = g(d) - g(d+1)
    let mut g: Vec<f64> = Vec::new();
    for d in 0..=k_max {
        let v = (-(d as f64 / wf).powf(p)).exp();
        if v == 0.0 {
            break;
        }
        g.push(v);
    }
    let g_at = |d: u64| g.get(d as usize).copied().unwrap_or(0.0);
    let fs: Vec<f64> = (0..=k_max).map(f).collect();

    let mut worst = 0.0f64;
    for k in 0..k_max {
        let mut sum = fs[0] * g_at(k);
        let reach = (g.len() as u64).min(k);
        for d in 0..reach {
            let j = k - d;
            if j == 0 {
                break;
            }
            sum += fs[j as usize] * (g_at(d) - g_at(d + 1));
        }
        let bound = factor * sum;
        let target = fs[(k + 1) as usize];
        worst = worst.max(bound / target);
        if bound > target * (1.0 + 1e-12) {
            return RecurrenceOutcome {
                propagated: false,
                first_failure_k: Some(k),
                worst_ratio: worst,
            };
        }
    }
    RecurrenceOutcome {
        propagated: true,
        first_failure_k: None,
        worst_ratio: worst,
    }
}

/// Largest `c0` (to within `tol`) for which [`recurrence_check`] propagates,
/// by bisection. Assumes propagation is monotone in `c0`.
pub fn max_propagating_c0(p: f64, w: u32, big_c0: f64, k_max: u64, tol: f64) -> f64 {
    let ok = |c0: f64| recurrence_check(p, w, big_c0, c0, k_max).propagated;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while ok(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return lo;
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_curve(w: u32, rate: f64, top: u64) -> TailCurve {
        let params = ModelParams::infinite(w, 1000).unwrap();
        let count = 1u64 << 40;
        let points = (0..=top)
            .map(|l| {
                let s = (-rate * l as f64).exp();
                TailPoint {
                    lambda: l,
                    survival: s,
                    stderr: (s * (1.0 - s) / count as f64).sqrt(),
                    count,
                }
            })
            .collect();
        TailCurve { params, j: 0, points }
    }

    #[test]
    fn tail_of_constant_zero_stream() {
        let params = ModelParams::infinite(1, 2).unwrap();
        let c = estimate_tail_curve(params, 0, vec![0; 50], &[0, 1, 2]).unwrap();
        let s: Vec<f64> = c.points.iter().map(|p| p.survival).collect();
        assert_eq!(s, vec![1.0, 0.0, 0.0]);
        assert!(c.points.iter().all(|p| p.stderr == 0.0));
    }

    #[test]
    fn tail_of_empty_stream() {
        let params = ModelParams::infinite(1, 2).unwrap();
        assert!(matches!(
            estimate_tail_curve(params, 0, Vec::new(), &[0]),
            Err(Error::NoData(_))
        ));
    }

    #[test]
    fn tail_stderr_formula() {
        let params = ModelParams::infinite(1, 2).unwrap();
        let c = estimate_tail_curve(params, 0, vec![0, 1, 1, 2], &[2, 1, 0]).unwrap();
        assert_eq!(c.points[1].lambda, 1);
        assert_eq!(c.points[1].survival, 0.75);
        assert!((c.points[1].stderr - (0.75f64 * 0.25 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn synthetic_decay_rate() {
        let curve = synthetic_curve(1, 0.25, 40);
        let fit = fit_decay(&curve, &FitWindow::default()).unwrap();
        assert!((fit.decay_rate_c_hat - 0.25).abs() < 1e-9);
        assert!(fit.intercept.abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        // exp(-0.25 l) <= 2 exp(-c l) for all l >= 3 iff c <= 0.25 + ln 2 / 40
        assert!((fit.c_envelope - (0.25 + 2f64.ln() / 40.0)).abs() < 1e-12);
        for p in window_points(&curve, &FitWindow::default()) {
            assert!(p.survival <= fit.envelope(p.lambda) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn degenerate_curve_is_unfittable() {
        let params = ModelParams::infinite(1, 5).unwrap();
        let c = estimate_tail_curve(params, 0, vec![0; 10], &[0, 1, 2, 3, 4]).unwrap();
        assert!(matches!(fit_decay(&c, &FitWindow::default()), Err(Error::Unfittable(_))));
    }

    #[test]
    fn synthetic_exponent() {
        let pts: Vec<(u32, f64)> = [1u32, 2, 4, 8, 16]
            .iter()
            .map(|&w| (w, 3.0 * (w as f64).powi(2)))
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-9);
        assert!((fit.prefactor - 3.0).abs() < 1e-9);
    }

    #[test]
    fn synthetic_band_slope() {
        let pts: Vec<(u32, f64)> = [2u32, 4, 8, 16].iter().map(|&w| (w, 0.7 * w as f64)).collect();
        assert!((band_structure_stat(&pts).unwrap().exponent - 1.0).abs() < 1e-9);
        assert!(matches!(
            band_structure_stat(&[(2, 0.0), (4, 0.0)]),
            Err(Error::Unfittable(_))
        ));
    }

    #[test]
    fn jackknife_of_constant() {
        let (m, se) = block_jackknife_mean(&[2.0; 100], 10).unwrap();
        assert_eq!(m, 2.0);
        assert!(se.abs() < 1e-12);
    }

    #[test]
    fn jackknife_matches_iid_stderr_for_unit_blocks() {
        let v: Vec<f64> = (0..20).map(|i| (i * i % 7) as f64).collect();
        let (m, se) = block_jackknife_mean(&v, 20).unwrap();
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 19.0;
        assert!((se - (var / 20.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn recurrence_trivial_rate() {
        for w in 1..=4 {
            for p in [1.0, 2.0] {
                let out = recurrence_check(p, w, 1.0, 0.0, 200);
                assert!(out.propagated);
                assert!(out.worst_ratio < 1.0);
            }
        }
    }

    #[test]
    fn recurrence_negative_control() {
        let out = recurrence_check(1.0, 4, 1.0, 10.0, 50 * 64);
        assert!(!out.propagated);
        assert!(out.first_failure_k.is_some());
    }

    #[test]
    fn recurrence_monotone_in_rate() {
        for w in [1, 2, 3] {
            let k_max = 50 * (w as u64).pow(3);
            let mut last = true;
            for step in 0..40 {
                let c0 = step as f64 * 0.05;
                let ok = recurrence_check(1.0, w, 1.0, c0, k_max).propagated;
                assert!(last || !ok, "W={w}: c0 = {c0} propagates after a smaller rate failed");
                last = ok;
            }
        }
    }

    #[test]
    fn default_grid_shape() {
        let g = default_lambda_grid(&ModelParams::infinite(1, 1).unwrap());
        assert_eq!(g, vec![0, 1, 2]);
        let g = default_lambda_grid(&ModelParams::infinite(2, 200).unwrap());
        assert_eq!(g, (0..=160).step_by(3).collect::<Vec<_>>());
        assert!(g.len() <= 64);
    }
}
