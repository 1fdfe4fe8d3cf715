//! Seeded Metropolis chain over image swaps targeting `P_{p,W,n}`.
//!
//! Each step draws a uniformly random unordered pair `{a, b}` and proposes
//! `swap_images(pi, a, b)`. For finite `p` the proposal is accepted with
//! probability `min(1, exp(-dE))`, where `dE` involves only the two affected
//! displacement terms. For `p = inf` a proposal is accepted iff it stays in
//! `S_W`.
//!
//! Random numbers come from ChaCha8 seeded with `seed` and switched to
//! stream `stream`, so chain `k` of a sweep uses `(seed, k)` and never shares
//! randomness with chain `k' != k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::{Exponent, ModelParams, Permutation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InitialState {
    #[default]
    Identity,
    RandomInSupport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    /// Stream index of the chain; independent chains sharing a seed must
    /// use distinct streams.
    #[serde(default)]
    pub stream: u64,
    pub steps: u64,
    pub burn_in: u64,
    pub thinning: u64,
    #[serde(default)]
    pub initial_state: InitialState,
    /// Recompute the full energy after every accepted move and compare it
    /// with the incrementally tracked value.
    #[serde(default)]
    pub verify_energy: bool,
}

impl SamplerConfig {
    /// Defaults: `burn_in = 10 (2n+1) W`, `thinning = 2n+1`.
    pub fn with_defaults(params: &ModelParams, seed: u64, steps: u64) -> Self {
        let m = params.size() as u64;
        SamplerConfig {
            seed,
            stream: 0,
            steps,
            burn_in: default_burn_in(params),
            thinning: m,
            initial_state: InitialState::Identity,
            verify_energy: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(Error::InvalidConfig("thinning must be >= 1".into()));
        }
        if self.steps > 0 && self.burn_in >= self.steps {
            return Err(Error::InvalidConfig(format!(
                "burn_in ({}) must be < steps ({})",
                self.burn_in, self.steps
            )));
        }
        if self.steps == 0 && self.burn_in > 0 {
            return Err(Error::InvalidConfig("burn_in must be 0 when steps is 0".into()));
        }
        Ok(())
    }

    pub fn expected_retained(&self) -> u64 {
        self.steps.saturating_sub(self.burn_in) / self.thinning
    }
}

pub fn default_burn_in(params: &ModelParams) -> u64 {
    10 * params.size() as u64 * params.w as u64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSummary {
    pub retained_samples: u64,
    pub acceptance_rate: f64,
    pub final_state: Permutation,
}

/// Precomputed `(d/W)^p` for every displacement `d` in `0..=2n`.
struct CostTable {
    costs: Vec<f64>,
}

impl CostTable {
    fn new(params: &ModelParams) -> Self {
        let m = params.size() as i64;
        CostTable {
            costs: (0..m)
                .map(|d| params.displacement_cost(d).expect("finite p"))
                .collect(),
        }
    }

    #[inline]
    fn cost(&self, d: i64) -> f64 {
        self.costs[d.unsigned_abs() as usize]
    }
}

/// Change in energy from swapping the images at storage offsets `ka`, `kb`.
#[inline]
fn swap_delta(table: &CostTable, pi: &Permutation, ka: usize, kb: usize, n: i64) -> f64 {
    let (a, b) = (ka as i64 - n, kb as i64 - n);
    let (pa, pb) = (pi.image_at_offset(ka), pi.image_at_offset(kb));
    table.cost(pb - a) + table.cost(pa - b) - table.cost(pa - a) - table.cost(pb - b)
}

#[inline]
fn swap_stays_in_band(pi: &Permutation, ka: usize, kb: usize, n: i64, w: i64) -> bool {
    let (a, b) = (ka as i64 - n, kb as i64 - n);
    (pi.image_at_offset(kb) - a).abs() <= w && (pi.image_at_offset(ka) - b).abs() <= w
}

#[inline]
fn propose_pair<R: Rng>(rng: &mut R, m: usize) -> (usize, usize) {
    let ka = rng.gen_range(0..m);
    let mut kb = rng.gen_range(0..m - 1);
    if kb >= ka {
        kb += 1;
    }
    (ka, kb)
}

pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A random member of `S_W`: the identity scrambled by `4 (2n+1) W`
/// accepted band-preserving swaps between points at distance at most `W`.
pub fn random_in_support<R: Rng>(rng: &mut R, w: u32, n: u32) -> Permutation {
    let mut pi = Permutation::identity(n);
    let m = pi.len();
    let (n_i, w_i) = (n as i64, w as i64);
    let target = 4 * m * w as usize;
    let mut accepted = 0;
    let mut tries = 0;
    while accepted < target && tries < 100 * target {
        tries += 1;
        let ka = rng.gen_range(0..m);
        let off = rng.gen_range(1..=w as usize);
        let kb = ka + off;
        if kb >= m {
            continue;
        }
        if swap_stays_in_band(&pi, ka, kb, n_i, w_i) {
            pi.swap_offsets(ka, kb);
            accepted += 1;
        }
    }
    pi
}

/// Runs the chain, calling `observer(step, state)` for every retained
/// state. Step `s` (1-based, counted after the `s`-th proposal) is retained
/// iff `s > burn_in` and `(s - burn_in) % thinning == 0`.
pub fn run_chain<F>(params: &ModelParams, config: &SamplerConfig, mut observer: F) -> Result<ChainSummary>
where
    F: FnMut(u64, &Permutation),
{
    config.validate()?;
    let mut rng = chain_rng(config.seed, config.stream);
    let mut pi = match config.initial_state {
        InitialState::Identity => Permutation::identity(params.n),
        InitialState::RandomInSupport => random_in_support(&mut rng, params.w, params.n),
    };
    let m = pi.len();
    let n = params.n as i64;
    let mut accepted = 0u64;
    let mut retained = 0u64;

    match params.p {
        Exponent::Finite(_) => {
            let table = CostTable::new(params);
            let mut energy = if config.verify_energy {
                pi.energy(params)?
            } else {
                0.0
            };
            for step in 1..=config.steps {
                let (ka, kb) = propose_pair(&mut rng, m);
                let delta = swap_delta(&table, &pi, ka, kb, n);
                let accept = delta <= 0.0 || rng.gen::<f64>() < (-delta).exp();
                if accept {
                    pi.swap_offsets(ka, kb);
                    accepted += 1;
                    if config.verify_energy {
                        energy += delta;
                        let full = pi.energy(params)?;
                        assert!(
                            (energy - full).abs() <= 1e-9 * full.max(1.0),
                            "incremental energy {energy} drifted from {full} at step {step}"
                        );
                    }
                }
                if step > config.burn_in && (step - config.burn_in) % config.thinning == 0 {
                    retained += 1;
                    observer(step, &pi);
                }
            }
        }
        Exponent::Infinite => {
            let w = params.w as i64;
            for step in 1..=config.steps {
                let (ka, kb) = propose_pair(&mut rng, m);
                if swap_stays_in_band(&pi, ka, kb, n, w) {
                    pi.swap_offsets(ka, kb);
                    accepted += 1;
                }
                if step > config.burn_in && (step - config.burn_in) % config.thinning == 0 {
                    retained += 1;
                    observer(step, &pi);
                }
            }
        }
    }

    Ok(ChainSummary {
        retained_samples: retained,
        acceptance_rate: if config.steps == 0 {
            0.0
        } else {
            accepted as f64 / config.steps as f64
        },
        final_state: pi,
    })
}

/// Per-sample cycle observables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub step_index: u64,
    /// `diam C_pi(j)` for the requested base point.
    pub diam: u64,
    /// `|pi(0) - 0|`.
    pub displacement0: u64,
    #[serde(rename = "maxC0")]
    pub max_c0: i64,
    #[serde(rename = "minC0")]
    pub min_c0: i64,
}

impl CycleRecord {
    pub fn of(step_index: u64, pi: &Permutation, j: i64) -> Self {
        let c0 = pi.cycle_of(0).expect("0 lies in every domain");
        let diam = if j == 0 {
            c0.diam()
        } else {
            pi.cycle_of(j).expect("j checked by caller").diam()
        };
        CycleRecord {
            step_index,
            diam,
            displacement0: pi.at(0).unsigned_abs(),
            max_c0: c0.max,
            min_c0: c0.min,
        }
    }
}

/// Streams one [`CycleRecord`] per retained sample to `sink`.
pub fn sample_cycle_observables<F>(
    params: &ModelParams,
    config: &SamplerConfig,
    j: i64,
    mut sink: F,
) -> Result<ChainSummary>
where
    F: FnMut(CycleRecord),
{
    let n = params.n as i64;
    if j < -n || j > n {
        return Err(Error::Domain { point: j, n: params.n });
    }
    run_chain(params, config, |step, pi| sink(CycleRecord::of(step, pi, j)))
}

/// Probability that one step moves `from` to `to`, for states differing
/// by a single image swap (proposal probability times acceptance).
pub fn transition_probability(params: &ModelParams, from: &Permutation, to: &Permutation) -> f64 {
    let diff: Vec<i64> = from
        .domain()
        .filter(|&i| from.at(i) != to.at(i))
        .collect();
    if diff.len() != 2 {
        return 0.0;
    }
    let (a, b) = (diff[0], diff[1]);
    if from.at(a) != to.at(b) || from.at(b) != to.at(a) {
        return 0.0;
    }
    let m = from.len() as f64;
    let propose = 2.0 / (m * (m - 1.0));
    let accept = match params.p {
        Exponent::Finite(_) => {
            let delta = to.energy(params).expect("finite") - from.energy(params).expect("finite");
            (-delta).exp().min(1.0)
        }
        Exponent::Infinite => {
            if to.in_support(params.w) {
                1.0
            } else {
                0.0
            }
        }
    };
    propose * accept
}
