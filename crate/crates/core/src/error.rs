use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("offspring distribution is empty")]
    EmptyDistribution,
    #[error("leaf atom forbidden: offspring count {0} must be at least 1")]
    LeafAtom(i64),
    #[error("offspring weight for k={k} must be positive, got {weight}")]
    NonPositiveWeight { k: i64, weight: f64 },
    #[error("duplicate offspring atom k={0}")]
    DuplicateAtom(i64),
    #[error("offspring weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("cannot parse offspring spec {spec:?}: {reason}")]
    DistributionSpec { spec: String, reason: String },

    #[error("invalid bias parameters: {0}")]
    InvalidBias(String),
    #[error("walk on the integers is not transient: requires d*beta > 1, got {0}")]
    NotTransient(f64),
    #[error("tail base 27*q1/4 = {0} is not below 1, series diverges")]
    DivergentTail(f64),

    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("regeneration invalidated: walker stepped into a pruned region at time {0}")]
    PrunedAccess(u64),

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),
    #[error("enumeration length {0} exceeds the maximum of 20")]
    EnumerationTooLong(u32),

    #[error("report serialization failed: {0}")]
    Serialization(String),
}
