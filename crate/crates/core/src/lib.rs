//! Bandwidth-estimation workbench: trace-driven bottleneck emulation,
//! monitor-interval features, estimator policies, offline IQL training and
//! evaluation metrics.
//!
//! Numeric code in [`nn`], [`rl`] and [`evalx`] is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below name the concrete instantiations.

// `!(x > 0.0)` style checks are there to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod evalx;
pub mod features;
pub mod netemu;
pub mod nn;
pub mod packet;
pub mod policy;
pub mod rl;
pub mod scalar;
pub mod seeds;
pub mod traces;

pub use scalar::Scalar;

/// Serialized actor: normalization stats plus dense layers, single precision.
pub type ModelWeights = policy::ActorNet<f32>;
pub type Mlp32 = nn::Mlp<f32>;
pub type Mlp64 = nn::Mlp<f64>;
pub type IqlLearner32 = rl::IqlLearner<f32>;
pub type IqlLearner64 = rl::IqlLearner<f64>;
