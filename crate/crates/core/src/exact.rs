//! Exhaustive enumeration of the Gibbs measure on small intervals.
//!
//! For finite `p` every permutation of `[-n, n]` carries positive weight, so
//! enumeration walks all `(2n+1)!` of them and is capped at
//! [`FINITE_CAP`] points. For `p = inf` only the band `S_W` is generated,
//! by backtracking, which reaches much larger `n`. Both streams are in
//! lexicographic order of the image sequence.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::perm::{Exponent, ModelParams, Permutation};

/// Largest interval (in points) enumerated for finite `p`.
pub const FINITE_CAP: usize = 9;

/// Largest band support materialized or scanned for `p = inf`.
pub const SUPPORT_CAP: u128 = 5_000_000;

/// Lexicographic stream of the admissible permutations for `params`.
pub enum Permutations {
    All(AllPermutations),
    Band(BandPermutations),
}

impl Iterator for Permutations {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        match self {
            Permutations::All(it) => it.next(),
            Permutations::Band(it) => it.next(),
        }
    }
}

pub fn enumerate_permutations(params: &ModelParams) -> Result<Permutations> {
    check_capacity(params)?;
    Ok(match params.p {
        Exponent::Finite(_) => Permutations::All(AllPermutations::new(params.n)),
        Exponent::Infinite => Permutations::Band(BandPermutations::new(params.w, params.n)),
    })
}

fn check_capacity(params: &ModelParams) -> Result<()> {
    match params.p {
        Exponent::Finite(_) if params.size() > FINITE_CAP => Err(Error::Capacity {
            size: params.size() as u64,
            cap: FINITE_CAP as u64,
        }),
        Exponent::Infinite => {
            let count = support_size(params.w, params.n);
            if count > SUPPORT_CAP {
                Err(Error::Capacity {
                    size: count.min(u64::MAX as u128) as u64,
                    cap: SUPPORT_CAP as u64,
                })
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

/// All permutations of `[-n, n]`, lexicographic.
pub struct AllPermutations {
    n: u32,
    current: Option<Vec<i64>>,
}

impl AllPermutations {
    pub fn new(n: u32) -> Self {
        AllPermutations {
            n,
            current: Some(Permutation::identity(n).images().to_vec()),
        }
    }
}

impl Iterator for AllPermutations {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        let cur = self.current.take()?;
        let out = Permutation::from_images(cur.clone()).expect("valid by construction");
        let mut next = cur;
        if next_lexicographic(&mut next) {
            self.current = Some(next);
        }
        debug_assert_eq!(out.n(), self.n);
        Some(out)
    }
}

fn next_lexicographic(v: &mut [i64]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|&x| x > v[i]).expect("pivot has a successor");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// Members of `S_W` on `[-n, n]`, lexicographic, by depth-first backtracking.
pub struct BandPermutations {
    n: i64,
    w: i64,
    images: Vec<i64>,
    used: Vec<bool>,
    // next candidate value to try at each position
    cand: Vec<i64>,
    depth: usize,
    finished: bool,
}

impl BandPermutations {
    pub fn new(w: u32, n: u32) -> Self {
        let m = 2 * n as usize + 1;
        let (n, w) = (n as i64, w as i64);
        let mut cand = vec![0; m];
        cand[0] = -n;
        BandPermutations {
            n,
            w,
            images: vec![0; m],
            used: vec![false; m],
            cand,
            depth: 0,
            finished: false,
        }
    }

    fn unassign(&mut self, d: usize) {
        let v = self.images[d];
        self.used[(v + self.n) as usize] = false;
    }
}

impl Iterator for BandPermutations {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        if self.finished {
            return None;
        }
        let m = self.images.len();
        loop {
            let d = self.depth;
            let i = d as i64 - self.n;
            let hi = (i + self.w).min(self.n);
            let mut placed = false;
            while self.cand[d] <= hi {
                let v = self.cand[d];
                self.cand[d] += 1;
                if self.used[(v + self.n) as usize] {
                    continue;
                }
                self.used[(v + self.n) as usize] = true;
                // value i - W is unreachable from later positions
                let stale = i - self.w;
                if stale >= -self.n && !self.used[(stale + self.n) as usize] {
                    self.used[(v + self.n) as usize] = false;
                    continue;
                }
                self.images[d] = v;
                placed = true;
                break;
            }
            if placed {
                if d + 1 == m {
                    let out = Permutation::from_images(self.images.clone())
                        .expect("valid by construction");
                    self.unassign(d);
                    return Some(out);
                }
                self.depth = d + 1;
                self.cand[d + 1] = (i + 1 - self.w).max(-self.n);
            } else {
                if d == 0 {
                    self.finished = true;
                    return None;
                }
                self.depth = d - 1;
                self.unassign(d - 1);
            }
        }
    }
}

/// `|S_W|` on `[-n, n]` by a transfer matrix over the occupancy of the
/// sliding value window `[i - W, i + W]`.
pub fn support_size(w: u32, n: u32) -> u128 {
    let (n, w) = (n as i64, w as i64);
    let width = 2 * w + 1;
    // bit k <-> value i - W + k; out-of-domain values are marked used
    let mut init = 0u64;
    for k in 0..width {
        let v = -n - w + k;
        if v < -n || v > n {
            init |= 1 << k;
        }
    }
    let mut states: HashMap<u64, u128> = HashMap::from([(init, 1)]);
    for i in -n..=n {
        let mut next: HashMap<u64, u128> = HashMap::new();
        for (&mask, &count) in &states {
            for k in 0..width {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let filled = mask | (1 << k);
                if filled & 1 == 0 {
                    continue;
                }
                let mut shifted = filled >> 1;
                let entering = i + 1 + w;
                if entering > n {
                    shifted |= 1 << (width - 1);
                }
                let slot = next.entry(shifted).or_insert(0);
                *slot = slot.saturating_add(count);
            }
        }
        states = next;
    }
    states.values().fold(0u128, |acc, &c| acc.saturating_add(c))
}

/// The exact Gibbs distribution on an enumerable instance.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub params: ModelParams,
    pub entries: Vec<(Permutation, f64)>,
    pub partition_value: f64,
}

impl ExactDistribution {
    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn probability(&self, pi: &Permutation) -> f64 {
        self.entries
            .binary_search_by(|(q, _)| q.cmp(pi))
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn expectation(&self, f: impl Fn(&Permutation) -> f64) -> f64 {
        self.entries.iter().map(|(pi, pr)| pr * f(pi)).sum()
    }
}

/// Unnormalized Gibbs weight: `exp(-energy)` or the support indicator.
pub fn gibbs_weight(pi: &Permutation, params: &ModelParams) -> f64 {
    match params.p {
        Exponent::Finite(_) => (-pi.energy(params).expect("finite p")).exp(),
        Exponent::Infinite => {
            if pi.in_support(params.w) {
                1.0
            } else {
                0.0
            }
        }
    }
}

pub fn exact_distribution(params: &ModelParams) -> Result<ExactDistribution> {
    let weighted: Vec<(Permutation, f64)> = enumerate_permutations(params)?
        .map(|pi| {
            let wgt = gibbs_weight(&pi, params);
            (pi, wgt)
        })
        .collect();
    let partition_value: f64 = weighted.iter().map(|(_, w)| w).sum();
    let entries = weighted
        .into_iter()
        .map(|(pi, w)| (pi, w / partition_value))
        .collect();
    Ok(ExactDistribution {
        params: *params,
        entries,
        partition_value,
    })
}

/// `P(diam C_pi(j) >= lambda)`.
pub fn exact_tail(params: &ModelParams, j: i64, lambda: u64) -> Result<f64> {
    Ok(exact_tail_curve(params, j, &[lambda])?.tail[0])
}

/// Exact survival function of `diam C_pi(j)` on a grid, in one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTail {
    pub grid: Vec<u64>,
    pub tail: Vec<f64>,
    pub partition_value: f64,
    pub support_size: u64,
}

pub fn exact_tail_curve(params: &ModelParams, j: i64, grid: &[u64]) -> Result<ExactTail> {
    let n = params.n as i64;
    if j < -n || j > n {
        return Err(Error::Domain { point: j, n: params.n });
    }
    let m = params.size();
    // unnormalized weight mass by cycle diameter
    let mut by_diam = vec![0.0f64; m];
    let mut z = 0.0;
    let mut count = 0u64;
    for pi in enumerate_permutations(params)? {
        let wgt = gibbs_weight(&pi, params);
        let d = pi.cycle_of(j)?.diam() as usize;
        by_diam[d] += wgt;
        z += wgt;
        count += 1;
    }
    let tail = grid
        .iter()
        .map(|&lambda| {
            let lo = lambda.min(m as u64) as usize;
            by_diam[lo..].iter().sum::<f64>() / z
        })
        .collect();
    Ok(ExactTail {
        grid: grid.to_vec(),
        tail,
        partition_value: z,
        support_size: count,
    })
}
