//! Exhaustive verification of the uncrossing map on small intervals.
//!
//! At `p = inf` the scan runs over `S_W`; for finite `p` over all
//! permutations. Preimages returned by [`uncross_preimage`] are compared
//! with a brute-force inversion built from the forward map alone.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exact::enumerate_permutations;
use crate::perm::{Exponent, ModelParams, Permutation};
use crate::uncross::{
    crossing_ratio_check, preimage_weight_ratio, uncross, uncross_alternate, uncross_preimage,
};

const MAX_WITNESSES: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckCount {
    pub checked: u64,
    pub violations: u64,
}

impl CheckCount {
    fn record(&mut self, ok: bool) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub check: String,
    pub permutation: Permutation,
    pub threshold: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<(i64, i64)>,
    pub value: f64,
}

/// Results for one exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub p: Exponent,
    pub permutations_scanned: u64,
    /// `p = inf` only: `uncross(pi, lambda + 2W)` lands in `S_W` with the
    /// cycle maximum of 0 in `(lambda, lambda + 2W]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_membership: Option<CheckCount>,
    /// `p = inf` only: at every threshold `t >= 0` with a crossing, the image
    /// lies in `S_W` with cycle maximum of 0 in `(t - W, t]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_membership_all_thresholds: Option<CheckCount>,
    /// Violations of the `lambda + 2W` property under the opposite composition order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alternate_order_violations: Option<u64>,
    /// `p = inf` only: `|preimage| <= W^2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preimage_cardinality: Option<CheckCount>,
    pub preimage_exactness: CheckCount,
    pub max_preimage_size: usize,
    /// Finite `p` only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_monotonicity: Option<CheckCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossing_ratio: Option<CheckCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ratio_over_bound: Option<f64>,
    /// Largest `sum P(pi)/P(tau) / (W^2 exp(-|t - max C_tau(0)|^p / W^p))`
    /// over admissible `tau` and `t >= 1`.
    pub max_ratio_sum_quotient: f64,
    pub witnesses: Vec<Witness>,
}

impl ExponentReport {
    pub fn violations(&self) -> u64 {
        let opt = |c: &Option<CheckCount>| c.map_or(0, |c| c.violations);
        opt(&self.image_membership)
            + opt(&self.image_membership_all_thresholds)
            + opt(&self.preimage_cardinality)
            + self.preimage_exactness.violations
            + opt(&self.energy_monotonicity)
            + opt(&self.crossing_ratio)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub n: u32,
    #[serde(rename = "W")]
    pub w: u32,
    pub reports: Vec<ExponentReport>,
    pub total_violations: u64,
}

pub fn verify_uncrossing(n: u32, w: u32, exponents: &[Exponent]) -> Result<Certificate> {
    let mut reports = Vec::with_capacity(exponents.len());
    for &p in exponents {
        let params = ModelParams::new(p, w, n)?;
        reports.push(verify_exponent(&params)?);
    }
    let total_violations = reports.iter().map(ExponentReport::violations).sum();
    Ok(Certificate {
        n,
        w,
        reports,
        total_violations,
    })
}

fn push_witness(witnesses: &mut Vec<Witness>, w: Witness) {
    if witnesses.len() < MAX_WITNESSES {
        witnesses.push(w);
    }
}

pub fn verify_exponent(params: &ModelParams) -> Result<ExponentReport> {
    let perms: Vec<Permutation> = enumerate_permutations(params)?.collect();
    let n = params.n as i64;
    let w = params.w as i64;
    let band = params.p.is_infinite();
    let maxes: Vec<i64> = perms
        .iter()
        .map(|pi| pi.cycle_of(0).map(|c| c.max))
        .collect::<Result<_>>()?;
    let mut witnesses = Vec::new();

    let mut report = ExponentReport {
        p: params.p,
        permutations_scanned: perms.len() as u64,
        image_membership: None,
        image_membership_all_thresholds: None,
        alternate_order_violations: None,
        preimage_cardinality: None,
        preimage_exactness: CheckCount::default(),
        max_preimage_size: 0,
        energy_monotonicity: None,
        crossing_ratio: None,
        max_ratio_over_bound: None,
        max_ratio_sum_quotient: 0.0,
        witnesses: Vec::new(),
    };

    if band {
        let mut membership = CheckCount::default();
        let mut alternate = 0u64;
        for lambda in 0..=2 * n {
            let t = lambda + 2 * w;
            let lands = |rho: &Permutation| -> Result<bool> {
                let m = rho.cycle_of(0)?.max;
                Ok(rho.in_support(params.w) && m <= t && m > lambda)
            };
            for (pi, &m) in perms.iter().zip(&maxes) {
                if m <= t {
                    continue;
                }
                let rho = uncross(pi, t)?;
                let ok = lands(&rho)?;
                membership.record(ok);
                if !ok {
                    push_witness(&mut witnesses, Witness {
                        check: "image_membership".into(),
                        permutation: pi.clone(),
                        threshold: t,
                        pair: None,
                        value: rho.cycle_of(0)?.max as f64,
                    });
                }
                if !lands(&uncross_alternate(pi, t)?)? {
                    alternate += 1;
                }
            }
        }
        let mut every = CheckCount::default();
        for t in 0..=2 * n {
            for (pi, &m) in perms.iter().zip(&maxes) {
                if m <= t {
                    continue;
                }
                let rho = uncross(pi, t)?;
                let top = rho.cycle_of(0)?.max;
                let ok = rho.in_support(params.w) && top <= t && top > t - w;
                every.record(ok);
                if !ok {
                    push_witness(&mut witnesses, Witness {
                        check: "image_membership_all_thresholds".into(),
                        permutation: pi.clone(),
                        threshold: t,
                        pair: None,
                        value: top as f64,
                    });
                }
            }
        }
        report.image_membership = Some(membership);
        report.image_membership_all_thresholds = Some(every);
        report.alternate_order_violations = Some(alternate);
    } else {
        let mut mono = CheckCount::default();
        for t in 0..n {
            for (pi, &m) in perms.iter().zip(&maxes) {
                if m <= t {
                    continue;
                }
                let before = pi.energy(params)?;
                let after = uncross(pi, t)?.energy(params)?;
                let ok = after <= before + 1e-12 * before.max(1.0);
                mono.record(ok);
                if !ok {
                    push_witness(&mut witnesses, Witness {
                        check: "energy_monotonicity".into(),
                        permutation: pi.clone(),
                        threshold: t,
                        pair: None,
                        value: after - before,
                    });
                }
            }
        }
        report.energy_monotonicity = Some(mono);

        let mut ratio = CheckCount::default();
        let mut worst = 0.0f64;
        let mut worst_witness = None;
        for tau in &perms {
            for t in -n..n {
                let lows: Vec<i64> = tau.domain().filter(|&a| a <= t && tau.at(a) <= t).collect();
                let highs: Vec<i64> = tau.domain().filter(|&b| b > t && tau.at(b) > t).collect();
                for &a in &lows {
                    for &b in &highs {
                        let r = crossing_ratio_check(tau, a, b, t, params)?;
                        ratio.record(r.satisfied);
                        let q = r.ratio / r.bound;
                        if q > worst {
                            worst = q;
                            worst_witness = Some(Witness {
                                check: "max_ratio_over_bound".into(),
                                permutation: tau.clone(),
                                threshold: t,
                                pair: Some((a, b)),
                                value: q,
                            });
                        }
                        if !r.satisfied {
                            push_witness(&mut witnesses, Witness {
                                check: "crossing_ratio".into(),
                                permutation: tau.clone(),
                                threshold: t,
                                pair: Some((a, b)),
                                value: q,
                            });
                        }
                    }
                }
            }
        }
        report.crossing_ratio = Some(ratio);
        report.max_ratio_over_bound = Some(worst);
        witnesses.extend(worst_witness);
    }

    // preimages against brute-force inversion of the forward map
    let mut cardinality = CheckCount::default();
    let mut worst_size: Option<Witness> = None;
    let mut worst_quotient: Option<Witness> = None;
    let t_max = if band { 2 * n } else { n - 1 };
    for t in 0..=t_max {
        let mut inverse: HashMap<&Permutation, Vec<Permutation>> = HashMap::new();
        let mut images = Vec::new();
        for (pi, &m) in perms.iter().zip(&maxes) {
            if m > t {
                images.push((uncross(pi, t)?, pi));
            }
        }
        let index: HashMap<&Permutation, usize> =
            perms.iter().enumerate().map(|(k, pi)| (pi, k)).collect();
        for (rho, pi) in &images {
            match index.get(rho) {
                Some(&k) => inverse.entry(&perms[k]).or_default().push((*pi).clone()),
                None => {
                    // image outside the scanned set (only possible off S_W)
                    report.preimage_exactness.record(false);
                    push_witness(&mut witnesses, Witness {
                        check: "image_outside_support".into(),
                        permutation: (*pi).clone(),
                        threshold: t,
                        pair: None,
                        value: 0.0,
                    });
                }
            }
        }
        for (tau, &m) in perms.iter().zip(&maxes) {
            if m > t {
                continue;
            }
            let pre = uncross_preimage(tau, t, params)?;
            let mut brute = inverse.remove(tau).unwrap_or_default();
            brute.sort();
            let exact = pre == brute;
            report.preimage_exactness.record(exact);
            if !exact {
                push_witness(&mut witnesses, Witness {
                    check: "preimage_exactness".into(),
                    permutation: tau.clone(),
                    threshold: t,
                    pair: None,
                    value: pre.len() as f64 - brute.len() as f64,
                });
            }
            if band {
                cardinality.record(pre.len() as i64 <= w * w);
            }
            if pre.len() > report.max_preimage_size {
                report.max_preimage_size = pre.len();
                worst_size = Some(Witness {
                    check: "max_preimage_size".into(),
                    permutation: tau.clone(),
                    threshold: t,
                    pair: None,
                    value: pre.len() as f64,
                });
            }
            if t >= 1 && !pre.is_empty() {
                let sum = preimage_weight_ratio(tau, &pre, params)?;
                let decay = match params.p {
                    Exponent::Finite(p) => (-((t - m) as f64 / w as f64).powf(p)).exp(),
                    Exponent::Infinite => 1.0,
                };
                let q = sum / ((w * w) as f64 * decay);
                if q > report.max_ratio_sum_quotient {
                    report.max_ratio_sum_quotient = q;
                    worst_quotient = Some(Witness {
                        check: "max_ratio_sum_quotient".into(),
                        permutation: tau.clone(),
                        threshold: t,
                        pair: None,
                        value: q,
                    });
                }
            }
        }
    }
    if band {
        report.preimage_cardinality = Some(cardinality);
    }
    witnesses.extend(worst_size);
    witnesses.extend(worst_quotient);
    report.witnesses = witnesses;
    Ok(report)
}
