//! Crossing indices of the orbit of 0, the uncrossing map and its preimages.
//!
//! For a threshold `t`, the orbit `0, pi(0), pi^2(0), ...` of a permutation
//! whose cycle through 0 exceeds `t` must cross `t` upwards at some step and
//! come back down later. Let `x -> u` be the first up-crossing and `y -> v`
//! the last down-crossing within one traversal of the cycle. Uncrossing
//! swaps the images at `x` and `y`, producing `x -> v` and `y -> u`: the
//! cycle through 0 is cut just below the threshold and the excursion above
//! it is split off into its own cycle.
//!
//! As a composition this is `pi` followed by the transposition `(u v)`.
//! The opposite order, transposing before applying `pi`, is exposed as
//! [`uncross_alternate`] only so the verification suite can show that it
//! does not have the required properties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::{Exponent, ModelParams, Permutation};

/// One step `from -> to` of the orbit of 0, taken at iteration `index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossing {
    pub index: usize,
    pub from: i64,
    pub to: i64,
}

/// Both crossings of threshold `t`: `x = pi^{i_first}(0)`,
/// `u = pi^{i_first+1}(0)`, `y = pi^{i_last}(0)`, `v = pi^{i_last+1}(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub threshold: i64,
    pub i_first: usize,
    pub i_last: usize,
    pub x: i64,
    pub u: i64,
    pub y: i64,
    pub v: i64,
}

fn orbit_of_zero(pi: &Permutation) -> Vec<i64> {
    pi.orbit(0).expect("0 lies in every domain")
}

/// Least `j >= 0` with `pi^j(0) <= t < pi^{j+1}(0)`; `None` iff the cycle
/// of 0 stays at or below `t`.
pub fn first_upcrossing(pi: &Permutation, t: i64) -> Option<Crossing> {
    let orbit = orbit_of_zero(pi);
    let len = orbit.len();
    (0..len).find_map(|j| {
        let (cur, next) = (orbit[j], orbit[(j + 1) % len]);
        (cur <= t && t < next).then_some(Crossing {
            index: j,
            from: cur,
            to: next,
        })
    })
}

/// Greatest `j` in `[0, period)` with `pi^{j+1}(0) <= t < pi^j(0)`, where
/// `period` is the length of the cycle of 0.
pub fn last_downcrossing(pi: &Permutation, t: i64) -> Option<Crossing> {
    let orbit = orbit_of_zero(pi);
    let len = orbit.len();
    (0..len).rev().find_map(|j| {
        let (cur, next) = (orbit[j], orbit[(j + 1) % len]);
        (next <= t && t < cur).then_some(Crossing {
            index: j,
            from: cur,
            to: next,
        })
    })
}

pub fn crossing_record(pi: &Permutation, t: i64) -> Option<CrossingRecord> {
    let up = first_upcrossing(pi, t)?;
    let down = last_downcrossing(pi, t)?;
    Some(CrossingRecord {
        threshold: t,
        i_first: up.index,
        i_last: down.index,
        x: up.from,
        u: up.to,
        y: down.from,
        v: down.to,
    })
}

/// The uncrossing map at threshold `t`: `swap_images(pi, x, y)`.
pub fn uncross(pi: &Permutation, t: i64) -> Result<Permutation> {
    let rec = crossing_record(pi, t).ok_or(Error::NotInE { threshold: t })?;
    pi.swap_images(rec.x, rec.y)
}

/// The other composition order, `swap_images(pi, u, v)`. Not a valid
/// uncrossing; kept for the verification suite's comparison.
pub fn uncross_alternate(pi: &Permutation, t: i64) -> Result<Permutation> {
    let rec = crossing_record(pi, t).ok_or(Error::NotInE { threshold: t })?;
    pi.swap_images(rec.u, rec.v)
}

/// Mirror image of [`uncross`] acting on excursions below `-t`, obtained by
/// conjugating with the reflection `i -> -i`.
pub fn uncross_minimum(pi: &Permutation, t: i64) -> Result<Permutation> {
    uncross(&pi.reflect(), t).map(|rho| rho.reflect())
}

/// All `pi` with a crossing at `t` and `uncross(pi, t) = tau` (restricted to
/// `S_W` when `p = inf`), in lexicographic order.
///
/// Every such `pi` is `swap_images(tau, a, b)` with `a` on the cycle of 0
/// in `tau` and `b, tau(b) > t`; at `p = inf` additionally
/// `a in (t - W, t]` and `b in (t, t + W]`. Candidates are filtered by the
/// round trip through [`uncross`].
pub fn uncross_preimage(tau: &Permutation, t: i64, params: &ModelParams) -> Result<Vec<Permutation>> {
    let c0 = tau.cycle_of(0)?;
    if c0.max > t {
        return Err(Error::AboveThreshold {
            threshold: t,
            max: c0.max,
        });
    }
    let n = tau.n() as i64;
    let w = params.w as i64;
    let band = params.p.is_infinite();
    let sources: Vec<i64> = orbit_of_zero(tau)
        .into_iter()
        .filter(|&a| !band || a > t - w)
        .collect();
    let b_hi = if band { (t + w).min(n) } else { n };
    let targets: Vec<i64> = (t + 1..=b_hi).filter(|&b| tau.at(b) > t).collect();

    let mut out = Vec::new();
    for &a in &sources {
        for &b in &targets {
            let pi = tau.swap_images(a, b)?;
            if band && !pi.in_support(params.w) {
                continue;
            }
            if uncross(&pi, t).as_ref() == Ok(tau) {
                out.push(pi);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// `sum over pi in preimage(tau) of P(pi)/P(tau)`; the preimage count at `p = inf`.
pub fn preimage_weight_ratio(tau: &Permutation, preimage: &[Permutation], params: &ModelParams) -> Result<f64> {
    match params.p {
        Exponent::Infinite => Ok(preimage.len() as f64),
        Exponent::Finite(_) => {
            let base = tau.energy(params)?;
            preimage
                .iter()
                .map(|pi| pi.energy(params).map(|e| (base - e).exp()))
                .sum()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioCheck {
    pub ratio: f64,
    pub bound: f64,
    pub satisfied: bool,
}

/// Compares `P(swap_images(tau, a, b)) / P(tau)` with
/// `exp(-|min(b, tau(b)) - max(a, tau(a))|^p / W^p)` for a pair with
/// `a, tau(a) <= t < b, tau(b)`.
pub fn crossing_ratio_check(
    tau: &Permutation,
    a: i64,
    b: i64,
    t: i64,
    params: &ModelParams,
) -> Result<RatioCheck> {
    let p = params.p.finite().ok_or(Error::UnsupportedExponent)?;
    let (ta, tb) = (tau.apply(a)?, tau.apply(b)?);
    if !(a <= t && ta <= t && b > t && tb > t) {
        return Err(Error::CrossingCondition { threshold: t });
    }
    let cost = |d: i64| params.displacement_cost(d).expect("finite p");
    let delta = cost(tb - a) + cost(ta - b) - cost(ta - a) - cost(tb - b);
    let ratio = (-delta).exp();
    let gap = b.min(tb) - a.max(ta);
    let bound = (-(gap as f64 / params.w as f64).powf(p)).exp();
    Ok(RatioCheck {
        ratio,
        bound,
        satisfied: ratio <= bound * (1.0 + 1e-9),
    })
}
