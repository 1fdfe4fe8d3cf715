//! Band-displacement spatial random permutations.
//!
//! Permutations `pi` of `[-n, n]` weighted by
//! `exp(-(1/W^p) sum_i |pi(i) - i|^p)`, with `p = inf` giving the uniform
//! measure on the band `S_W = { pi : max_i |pi(i) - i| <= W }`.
//!
//! * [`perm`]: permutations, cycles, energy and support membership.
//! * [`exact`]: exhaustive enumeration of the Gibbs measure on small intervals.
//! * [`sampler`]: seeded Metropolis chain over image swaps.
//! * [`uncross`]: crossing indices, the uncrossing map, its preimages and
//!   energy-ratio bounds, plus an exhaustive verification suite.
//! * [`analysis`]: tail curves, decay and scaling fits, preimage statistics
//!   and the tail-bound recurrence checker.

pub mod analysis;
pub mod error;
pub mod exact;
pub mod perm;
pub mod sampler;
pub mod uncross;
pub mod verify;

pub use error::{Error, Result};
pub use perm::{CycleStats, Exponent, ModelParams, Permutation};
