//! Permutations of the integer interval `[-n, n]` and the Gibbs model
//! parameters that weight them.
//!
//! Every public interface speaks in signed coordinates. Internally a
//! permutation stores its images in a vector indexed by `i + n`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Displacement exponent of the Gibbs weight.
///
/// `Infinite` selects the hard-support model: the uniform measure on
/// permutations whose displacements are all at most `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            return Ok(Exponent::Infinite);
        }
        if !p.is_finite() || p < 1.0 {
            return Err(Error::InvalidParams(format!(
                "p must be >= 1 or \"inf\", got {p}"
            )));
        }
        Ok(Exponent::Finite(p))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Exponent::Finite(p) => Some(p),
            Exponent::Infinite => None,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Exponent::Infinite);
        }
        let p: f64 = s
            .parse()
            .map_err(|_| Error::InvalidParams(format!("p must be >= 1 or \"inf\", got {s:?}")))?;
        Exponent::new(p)
    }
}

// Serialized as a JSON number for finite p and the string "inf" otherwise.
impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => serializer.serialize_f64(*p),
            Exponent::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Num(p) => Exponent::new(p),
            Raw::Str(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// The triple `(p, W, n)` selecting `P_{p,W,n}` on permutations of `[-n, n]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    pub p: Exponent,
    #[serde(rename = "W")]
    pub w: u32,
    pub n: u32,
}

#[derive(Deserialize)]
struct RawParams {
    p: Exponent,
    #[serde(rename = "W")]
    w: u32,
    n: u32,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.p, raw.w, raw.n)
    }
}

impl ModelParams {
    pub fn new(p: Exponent, w: u32, n: u32) -> Result<Self> {
        if let Exponent::Finite(v) = p {
            Exponent::new(v)?;
        }
        if w < 1 {
            return Err(Error::InvalidParams("W must be >= 1".into()));
        }
        if n < 1 {
            return Err(Error::InvalidParams("n must be >= 1".into()));
        }
        Ok(ModelParams { p, w, n })
    }

    pub fn finite(p: f64, w: u32, n: u32) -> Result<Self> {
        ModelParams::new(Exponent::new(p)?, w, n)
    }

    pub fn infinite(w: u32, n: u32) -> Result<Self> {
        ModelParams::new(Exponent::Infinite, w, n)
    }

    /// Number of points `2n + 1`.
    pub fn size(&self) -> usize {
        2 * self.n as usize + 1
    }

    /// Gibbs energy cost of a single displacement `d`, i.e. `(d / W)^p`.
    /// `None` when `p = inf`.
    pub fn displacement_cost(&self, d: i64) -> Option<f64> {
        self.p
            .finite()
            .map(|p| (d.unsigned_abs() as f64 / self.w as f64).powf(p))
    }
}

/// A bijection of `[-n, n]`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct Permutation {
    n: u32,
    images: Vec<i64>,
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.images, f)
    }
}

impl From<Permutation> for Vec<i64> {
    fn from(p: Permutation) -> Vec<i64> {
        p.images
    }
}

impl TryFrom<Vec<i64>> for Permutation {
    type Error = Error;

    fn try_from(images: Vec<i64>) -> Result<Self> {
        Permutation::from_images(images)
    }
}

impl Permutation {
    pub fn identity(n: u32) -> Self {
        let n_i = n as i64;
        Permutation {
            n,
            images: (-n_i..=n_i).collect(),
        }
    }

    /// Builds a permutation from the images of `-n, ..., n` in order.
    pub fn from_images(images: Vec<i64>) -> Result<Self> {
        if images.len() % 2 == 0 {
            return Err(Error::InvalidPermutation(format!(
                "expected an odd number of images (2n+1), got {}",
                images.len()
            )));
        }
        let n = (images.len() / 2) as u32;
        if n < 1 {
            return Err(Error::InvalidPermutation("domain must have n >= 1".into()));
        }
        let n_i = n as i64;
        let mut seen = vec![false; images.len()];
        for &v in &images {
            if v < -n_i || v > n_i {
                return Err(Error::InvalidPermutation(format!(
                    "image {v} outside [-{n}, {n}]"
                )));
            }
            let slot = &mut seen[(v + n_i) as usize];
            if *slot {
                return Err(Error::InvalidPermutation(format!("image {v} repeated")));
            }
            *slot = true;
        }
        Ok(Permutation { n, images })
    }

    /// Identity on `[-n, n]` with the listed points moved; pairs are `(i, pi(i))`.
    pub fn from_mapping(n: u32, moved: &[(i64, i64)]) -> Result<Self> {
        let mut images = Permutation::identity(n).images;
        for &(i, v) in moved {
            let n_i = n as i64;
            if i < -n_i || i > n_i {
                return Err(Error::Domain { point: i, n });
            }
            images[(i + n_i) as usize] = v;
        }
        Permutation::from_images(images)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[i64] {
        &self.images
    }

    pub fn contains(&self, i: i64) -> bool {
        let n = self.n as i64;
        (-n..=n).contains(&i)
    }

    pub fn domain(&self) -> std::ops::RangeInclusive<i64> {
        let n = self.n as i64;
        -n..=n
    }

    fn check(&self, i: i64) -> Result<usize> {
        if self.contains(i) {
            Ok((i + self.n as i64) as usize)
        } else {
            Err(Error::Domain { point: i, n: self.n })
        }
    }

    /// `pi(i)`. Panics if `i` is outside the domain; see [`Permutation::apply`].
    #[inline]
    pub fn at(&self, i: i64) -> i64 {
        self.images[(i + self.n as i64) as usize]
    }

    pub fn apply(&self, i: i64) -> Result<i64> {
        self.check(i).map(|k| self.images[k])
    }

    pub fn is_identity(&self) -> bool {
        self.domain().zip(&self.images).all(|(i, &v)| i == v)
    }

    pub fn max_displacement(&self) -> u64 {
        self.domain()
            .zip(&self.images)
            .map(|(i, &v)| (v - i).unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    pub fn in_support(&self, w: u32) -> bool {
        self.max_displacement() <= w as u64
    }

    /// Gibbs energy `(1/W^p) * sum_i |pi(i) - i|^p`.
    pub fn energy(&self, params: &ModelParams) -> Result<f64> {
        let p = params.p.finite().ok_or(Error::UnsupportedExponent)?;
        let w = params.w as f64;
        let total: f64 = self
            .domain()
            .zip(&self.images)
            .map(|(i, &v)| ((v - i).unsigned_abs() as f64 / w).powf(p))
            .sum();
        Ok(total)
    }

    /// Returns `rho` with `rho(a) = pi(b)`, `rho(b) = pi(a)`.
    pub fn swap_images(&self, a: i64, b: i64) -> Result<Permutation> {
        let mut out = self.clone();
        out.swap_images_in_place(a, b)?;
        Ok(out)
    }

    pub fn swap_images_in_place(&mut self, a: i64, b: i64) -> Result<()> {
        let ka = self.check(a)?;
        let kb = self.check(b)?;
        if ka == kb {
            return Err(Error::DegenerateSwap(a));
        }
        self.images.swap(ka, kb);
        Ok(())
    }

    /// Unchecked swap by storage offsets, for the sampler's inner loop.
    #[inline]
    pub(crate) fn swap_offsets(&mut self, ka: usize, kb: usize) {
        self.images.swap(ka, kb);
    }

    #[inline]
    pub(crate) fn image_at_offset(&self, k: usize) -> i64 {
        self.images[k]
    }

    /// Conjugation by the reflection `i -> -i`: `rho(i) = -pi(-i)`.
    pub fn reflect(&self) -> Permutation {
        Permutation {
            n: self.n,
            images: self.images.iter().rev().map(|&v| -v).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let n = self.n as i64;
        let mut images = vec![0; self.images.len()];
        for (i, &v) in self.domain().zip(&self.images) {
            images[(v + n) as usize] = i;
        }
        Permutation { n: self.n, images }
    }

    /// Orbit of `j` listed in iteration order `j, pi(j), pi^2(j), ...`.
    pub fn orbit(&self, j: i64) -> Result<Vec<i64>> {
        self.check(j)?;
        let mut out = vec![j];
        let mut cur = self.at(j);
        while cur != j {
            out.push(cur);
            cur = self.at(cur);
        }
        Ok(out)
    }

    pub fn cycle_of(&self, j: i64) -> Result<CycleStats> {
        self.check(j)?;
        let mut length = 1usize;
        let (mut min, mut max) = (j, j);
        let mut cur = self.at(j);
        while cur != j {
            length += 1;
            min = min.min(cur);
            max = max.max(cur);
            cur = self.at(cur);
        }
        Ok(CycleStats {
            base: j,
            length,
            min,
            max,
        })
    }

    /// All cycles, each listed from its smallest element.
    pub fn cycles(&self) -> Vec<Vec<i64>> {
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        for i in self.domain() {
            let k = (i + self.n as i64) as usize;
            if seen[k] {
                continue;
            }
            let orbit = self.orbit(i).expect("domain point");
            for &x in &orbit {
                seen[(x + self.n as i64) as usize] = true;
            }
            out.push(orbit);
        }
        out
    }
}

/// Summary of the cycle `C_pi(j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleStats {
    pub base: i64,
    pub length: usize,
    pub min: i64,
    pub max: i64,
}

impl CycleStats {
    pub fn diam(&self) -> u64 {
        (self.max - self.min) as u64
    }

    /// The orbit's element set, recomputed from `pi`.
    pub fn elements(&self, pi: &Permutation) -> BTreeSet<i64> {
        pi.orbit(self.base)
            .expect("cycle base lies in domain")
            .into_iter()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(n: u32, moved: &[(i64, i64)]) -> Permutation {
        Permutation::from_mapping(n, moved).unwrap()
    }

    #[test]
    fn cycle_of_fixed_point() {
        let c = Permutation::identity(2).cycle_of(0).unwrap();
        assert_eq!((c.length, c.diam()), (1, 0));
        assert_eq!(c.elements(&Permutation::identity(2)), BTreeSet::from([0]));
    }

    #[test]
    fn cycle_of_transposition() {
        let pi = perm(2, &[(0, 1), (1, 0)]);
        let c = pi.cycle_of(0).unwrap();
        assert_eq!(c.elements(&pi), BTreeSet::from([0, 1]));
        assert_eq!((c.length, c.diam()), (2, 1));
    }

    #[test]
    fn cycle_of_three_cycle() {
        let pi = perm(3, &[(0, 3), (3, 1), (1, 0)]);
        let c = pi.cycle_of(0).unwrap();
        assert_eq!(c.elements(&pi), BTreeSet::from([0, 1, 3]));
        assert_eq!((c.min, c.max, c.diam(), c.length), (0, 3, 3, 3));
        // brute-force orbit iteration
        let mut seen = BTreeSet::new();
        let mut x = 0;
        for _ in 0..pi.len() {
            seen.insert(x);
            x = pi.at(x);
        }
        assert_eq!(seen, c.elements(&pi));
    }

    #[test]
    fn cycle_of_out_of_domain() {
        assert_eq!(
            Permutation::identity(2).cycle_of(3),
            Err(Error::Domain { point: 3, n: 2 })
        );
    }

    #[test]
    fn energy_examples() {
        let id = Permutation::identity(2);
        for p in [1.0, 1.5, 2.0, 7.0] {
            assert_eq!(id.energy(&ModelParams::finite(p, 3, 2).unwrap()).unwrap(), 0.0);
        }
        let swap01 = perm(2, &[(0, 1), (1, 0)]);
        assert_eq!(swap01.energy(&ModelParams::finite(1.0, 1, 2).unwrap()).unwrap(), 2.0);
        let swap02 = perm(2, &[(0, 2), (2, 0)]);
        assert_eq!(swap02.energy(&ModelParams::finite(2.0, 2, 2).unwrap()).unwrap(), 2.0);
        assert_eq!(
            id.energy(&ModelParams::infinite(1, 2).unwrap()),
            Err(Error::UnsupportedExponent)
        );
    }

    #[test]
    fn support_examples() {
        let id = Permutation::identity(2);
        assert_eq!(id.max_displacement(), 0);
        assert!(id.in_support(1));
        let swap02 = perm(2, &[(0, 2), (2, 0)]);
        assert_eq!(swap02.max_displacement(), 2);
        assert!(!swap02.in_support(1));
        assert!(swap02.in_support(2));
    }

    #[test]
    fn swap_examples() {
        let id = Permutation::identity(2);
        let s = id.swap_images(0, 1).unwrap();
        assert_eq!(s, perm(2, &[(0, 1), (1, 0)]));
        assert_eq!(id.swap_images(1, 1), Err(Error::DegenerateSwap(1)));
        assert!(matches!(id.swap_images(0, 5), Err(Error::Domain { .. })));

        let s = Permutation::identity(3).swap_images(0, 3).unwrap();
        assert_eq!(s.energy(&ModelParams::finite(1.0, 1, 3).unwrap()).unwrap(), 6.0);
    }

    #[test]
    fn rejects_invalid_images() {
        assert!(Permutation::from_images(vec![0, 0, 1]).is_err());
        assert!(Permutation::from_images(vec![-1, 0, 2]).is_err());
        assert!(Permutation::from_images(vec![0, 1]).is_err());
        assert!(Permutation::from_images(vec![0]).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::finite(0.5, 1, 1).is_err());
        assert!(ModelParams::finite(1.0, 0, 1).is_err());
        assert!(ModelParams::finite(1.0, 1, 0).is_err());
        assert!("inf".parse::<Exponent>().unwrap().is_infinite());
        assert_eq!("1.5".parse::<Exponent>().unwrap(), Exponent::Finite(1.5));
    }

    #[test]
    fn json_format() {
        let pi = perm(1, &[(0, 1), (1, 0)]);
        let s = serde_json::to_string(&pi).unwrap();
        assert_eq!(s, "[-1,1,0]");
        let back: Permutation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, pi);
        assert!(serde_json::from_str::<Permutation>("[0,0,1]").is_err());

        let params = ModelParams::infinite(2, 3).unwrap();
        let s = serde_json::to_string(&params).unwrap();
        assert_eq!(s, r#"{"p":"inf","W":2,"n":3}"#);
        assert_eq!(serde_json::from_str::<ModelParams>(&s).unwrap(), params);
        assert!(serde_json::from_str::<ModelParams>(r#"{"p":0.5,"W":2,"n":3}"#).is_err());
    }
}
