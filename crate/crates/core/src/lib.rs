//! Coupled biased random walks on Galton-Watson trees.
//!
//! The crate couples a `beta`-biased and a `(beta + eps)`-biased walk on one
//! lazily grown tree with a shared `Y` walk on the integers, cuts the run at
//! regeneration times of `Y`, and estimates speeds and segment statistics
//! alongside the analytic bounds they are compared with.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod bounds;
pub mod coupling;
pub mod enumerate;
pub mod error;
pub mod offspring;
pub mod regen;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod segments;
pub mod stats;
pub mod tree;

pub use coupling::{BiasParams, CoupledWalk, Move, StepRecord, Walk};
pub use error::{Error, Result};
pub use offspring::OffspringDistribution;
pub use regen::{RegenConfig, RegenMode};
pub use rng::RandomnessStream;
