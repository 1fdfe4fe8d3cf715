use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point} lies outside the domain [-{n}, {n}]")]
    Domain { point: i64, n: u32 },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("swap_images requires two distinct points, got {0} twice")]
    DegenerateSwap(i64),

    #[error("energy is undefined for p = inf; use in_support instead")]
    UnsupportedExponent,

    #[error("interval of {size} points exceeds the exhaustive cap ({cap})")]
    Capacity { size: u64, cap: u64 },

    #[error("the cycle of 0 never exceeds threshold {threshold}; permutation is not in E_t")]
    NotInE { threshold: i64 },

    #[error("the cycle of 0 exceeds threshold {threshold} (max {max}); not a valid uncrossing target")]
    AboveThreshold { threshold: i64, max: i64 },

    #[error("crossing condition violated: need a, tau(a) <= {threshold} < b, tau(b)")]
    CrossingCondition { threshold: i64 },

    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("cannot fit: {0}")]
    Unfittable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
