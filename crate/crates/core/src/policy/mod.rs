//! Bandwidth estimators.

mod actor;
mod heuristic;
mod transform;

pub use actor::{
    head_transform, load_weights, mlp_forward, read_weights, save_weights, write_weights, ActorNet,
    Normalizer, HEAD_OUTPUTS, HIDDEN_WIDTH, STD_FLOOR, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};
pub use heuristic::{HeuristicConfig, HeuristicEstimator};
pub use transform::{from_bps, normalized_to_bps, to_bps, NormalizedAction, MAX_BPS, MIN_BPS};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::features::{Observation, SHORT_MI_MS};
use crate::seeds::{self, Stream};
use crate::traces::Trace;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite parameter in weights")]
    NonFiniteParameter,
    #[error("missing version tag")]
    MissingVersion,
    #[error("weight file version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed weight file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A receiver-side bandwidth estimator queried once per short MI.
pub trait Estimator {
    /// Estimated bottleneck bandwidth in bps; must be finite and positive.
    fn estimate(&mut self, obs: &Observation) -> f64;

    fn name(&self) -> String;
}

impl<E: Estimator + ?Sized> Estimator for Box<E> {
    fn estimate(&mut self, obs: &Observation) -> f64 {
        (**self).estimate(obs)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

#[derive(Debug, Clone)]
pub struct ConstantEstimator {
    pub bps: f64,
}

impl Estimator for ConstantEstimator {
    fn estimate(&mut self, _obs: &Observation) -> f64 {
        self.bps
    }

    fn name(&self) -> String {
        format!("constant_{}", self.bps)
    }
}

/// Reports the ground-truth capacity of the MI the action will govern (the
/// time average over the next short MI), clamped to the action range.
#[derive(Debug, Clone)]
pub struct OracleEstimator {
    trace: Trace,
}

impl OracleEstimator {
    pub fn new(trace: Trace) -> Self {
        Self { trace }
    }
}

impl Estimator for OracleEstimator {
    fn estimate(&mut self, obs: &Observation) -> f64 {
        let t = obs.step as f64 * SHORT_MI_MS;
        self.trace
            .window_mean(t, t + SHORT_MI_MS)
            .0
            .clamp(MIN_BPS, MAX_BPS)
    }

    fn name(&self) -> String {
        "oracle".into()
    }
}

/// Adds Gaussian noise with standard deviation `sigma` to the inner
/// estimate in normalized action space.
pub struct NoisyEstimator<E> {
    inner: E,
    sigma: f64,
    rng: ChaCha8Rng,
}

impl<E: Estimator> NoisyEstimator<E> {
    pub fn new(inner: E, sigma: f64, seed: u64) -> Self {
        Self {
            inner,
            sigma,
            rng: seeds::substream(seed, Stream::PolicyNoise),
        }
    }
}

impl<E: Estimator> Estimator for NoisyEstimator<E> {
    fn estimate(&mut self, obs: &Observation) -> f64 {
        let base = self.inner.estimate(obs);
        let Ok(a) = from_bps(base) else {
            return base;
        };
        let noise = if self.sigma > 0.0 {
            Normal::new(0.0, self.sigma).map_or(0.0, |n| n.sample(&mut self.rng))
        } else {
            0.0
        };
        to_bps(NormalizedAction::new((a.value() + noise).clamp(-1.0, 1.0)).expect("finite action"))
    }

    fn name(&self) -> String {
        format!("{}_noise{}", self.inner.name(), self.sigma)
    }
}

/// Neural policy. Uses the action mean unless sampling is enabled.
pub struct NeuralEstimator {
    weights: ActorNet<f32>,
    sampler: Option<ChaCha8Rng>,
    label: String,
}

impl NeuralEstimator {
    pub fn new(weights: ActorNet<f32>, label: impl Into<String>) -> Result<Self, PolicyError> {
        weights.validate()?;
        Ok(Self {
            weights,
            sampler: None,
            label: label.into(),
        })
    }

    /// Diagnostic mode: draw actions from `N(mean, std)` instead of the mean.
    pub fn with_sampling(mut self, seed: u64) -> Self {
        self.sampler = Some(seeds::substream(seed, Stream::PolicyNoise));
        self
    }
}

impl Estimator for NeuralEstimator {
    fn estimate(&mut self, obs: &Observation) -> f64 {
        let (mean, std) = self.weights.forward_one(obs.values());
        let (mean, std) = (f64::from(mean), f64::from(std));
        let a = match &mut self.sampler {
            Some(rng) => mean + std * rng.sample::<f64, _>(rand_distr::StandardNormal),
            None => mean,
        };
        normalized_to_bps(a.clamp(-1.0, 1.0)).unwrap_or(f64::NAN)
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}
