//! Offline IQL: expectile value regression, one-step Bellman critics and an
//! advantage-weighted actor, trained from logged call trajectories.

mod gradcheck;
mod losses;

pub use gradcheck::{grad_check, relative_error, GRAD_CHECK_FLOOR, GRAD_CHECK_STEP};
pub use losses::{
    actor_loss, awr_weights, critic_loss, expectile_loss, scalar_head, value_loss, with_action,
};

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{CallTrajectory, DataError, TransitionBatch, TransitionSet, MOS_MAX};
use crate::features::OBS_DIM;
use crate::nn::{Activation, Adam, Mlp};
use crate::policy::{ActorNet, Normalizer, HIDDEN_WIDTH};
use crate::scalar::Scalar;
use crate::seeds::{self, Stream};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("reward {value} outside [0, 5]")]
    RewardRange { value: f64 },
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid calls: {}", .0.join(", "))]
    InvalidCalls(Vec<String>),
    #[error("non-finite loss at step {step}: v={v_loss} q={q_loss} actor={actor_loss}")]
    NonFiniteLoss {
        step: usize,
        v_loss: f64,
        q_loss: f64,
        actor_loss: f64,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// `r_audio + r_video`, in `[0, 10]`.
    #[default]
    Sum,
    /// The sum divided by 10, in `[0, 1]`.
    Scaled,
}

impl std::str::FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Self::Sum),
            "scaled" => Ok(Self::Scaled),
            other => Err(format!("unknown reward mode {other:?} (sum | scaled)")),
        }
    }
}

pub fn compose_reward(r_audio: f64, r_video: f64, mode: RewardMode) -> Result<f64, RlError> {
    for value in [r_audio, r_video] {
        if !(0.0..=MOS_MAX).contains(&value) {
            return Err(RlError::RewardRange { value });
        }
    }
    let sum = r_audio + r_video;
    Ok(match mode {
        RewardMode::Sum => sum,
        RewardMode::Scaled => sum / (2.0 * MOS_MAX),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqlHyper {
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    /// Advantage temperature.
    pub beta: f64,
    /// Expectile.
    pub tau: f64,
    /// Target smoothing rate.
    pub rho: f64,
    pub awr_clip: f64,
    pub steps: usize,
    pub seed: u64,
}

impl IqlHyper {
    pub fn paper() -> Self {
        Self {
            gamma: 0.99,
            lr: 3e-4,
            batch: 16_384,
            beta: 8.0,
            tau: 0.7,
            rho: 0.005,
            awr_clip: 100.0,
            steps: 50_000,
            seed: 0,
        }
    }

    pub fn desk() -> Self {
        Self {
            batch: 256,
            ..Self::paper()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: String| Err(RlError::Hyper(m));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("expectile {} not in (0, 1)", self.tau));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("discount {} not in [0, 1)", self.gamma));
        }
        if !(self.beta > 0.0) {
            return bad(format!("temperature {} must be positive", self.beta));
        }
        if !(self.lr > 0.0) || !(self.rho > 0.0 && self.rho <= 1.0) || !(self.awr_clip > 0.0) {
            return bad("lr, rho and awr_clip must be positive (rho <= 1)".into());
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        Ok(())
    }
}

impl Default for IqlHyper {
    fn default() -> Self {
        Self::desk()
    }
}

/// Twin Q networks, a value network and the Q target copies.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticWeights<T> {
    pub q1: Mlp<T>,
    pub q2: Mlp<T>,
    pub v: Mlp<T>,
    pub q1_target: Mlp<T>,
    pub q2_target: Mlp<T>,
}

impl<T: Scalar> CriticWeights<T> {
    pub fn random<R: rand::Rng>(rng: &mut R) -> Self {
        let q_sizes = [OBS_DIM + 1, HIDDEN_WIDTH, HIDDEN_WIDTH, 1];
        let v_sizes = [OBS_DIM, HIDDEN_WIDTH, HIDDEN_WIDTH, 1];
        let q1 = Mlp::new(&q_sizes, Activation::Tanh, Activation::Identity, rng);
        let q2 = Mlp::new(&q_sizes, Activation::Tanh, Activation::Identity, rng);
        let v = Mlp::new(&v_sizes, Activation::Tanh, Activation::Identity, rng);
        Self {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            v,
        }
    }

    /// `min(Q1_target, Q2_target)` at standardized `(x, a)`.
    pub fn target_q(&self, xa: ArrayView2<T>) -> Array1<T> {
        let a = scalar_head(&self.q1_target, xa);
        let b = scalar_head(&self.q2_target, xa);
        ndarray::Zip::from(&a)
            .and(&b)
            .map_collect(|&x, &y| x.min(y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub v_loss: f64,
    pub q_loss: f64,
    pub actor_loss: f64,
    pub mean_awr_weight: f64,
}

/// Actor, critics and optimizer state.
#[derive(Debug, Clone)]
pub struct IqlLearner<T> {
    pub actor: ActorNet<T>,
    pub critics: CriticWeights<T>,
    hyper: IqlHyper,
    opt_actor: Adam<T>,
    opt_q1: Adam<T>,
    opt_q2: Adam<T>,
    opt_v: Adam<T>,
}

impl<T: Scalar> IqlLearner<T> {
    pub fn new(norm: Normalizer<T>, hyper: IqlHyper) -> Result<Self, RlError> {
        hyper.validate()?;
        let mut rng = seeds::substream(hyper.seed, Stream::Init);
        let actor = ActorNet::random(norm, &mut rng);
        let critics = CriticWeights::random(&mut rng);
        let lr = T::lit(hyper.lr);
        Ok(Self {
            opt_actor: Adam::new(&actor.net, lr),
            opt_q1: Adam::new(&critics.q1, lr),
            opt_q2: Adam::new(&critics.q2, lr),
            opt_v: Adam::new(&critics.v, lr),
            actor,
            critics,
            hyper,
        })
    }

    pub fn hyper(&self) -> &IqlHyper {
        &self.hyper
    }

    /// One update of V, then the actor, then both critics, then the targets.
    pub fn step(&mut self, batch: &TransitionBatch<T>, step: usize) -> Result<StepLosses, RlError> {
        let h = self.hyper;
        let x = self.actor.norm.apply(batch.obs.view());
        let x_next = self.actor.norm.apply(batch.next_obs.view());
        let xa = with_action(x.view(), batch.actions.view());
        let q_target = self.critics.target_q(xa.view());

        let (v_loss, v_grads) =
            value_loss(&self.critics.v, x.view(), q_target.view(), T::lit(h.tau));
        self.opt_v.step(&mut self.critics.v, &v_grads);

        let v_now = scalar_head(&self.critics.v, x.view());
        let adv = &q_target - &v_now;
        let weights = awr_weights(adv.view(), T::lit(h.beta), T::lit(h.awr_clip));
        let (actor_loss, a_grads) = actor_loss(
            &self.actor.net,
            x.view(),
            batch.actions.view(),
            weights.view(),
        );
        self.opt_actor.step(&mut self.actor.net, &a_grads);

        let v_next = scalar_head(&self.critics.v, x_next.view());
        let gamma = T::lit(h.gamma);
        let y = &batch.rewards + &(&batch.not_done() * &v_next).mapv(|v| gamma * v);
        let (l1, g1) = critic_loss(&self.critics.q1, xa.view(), y.view());
        let (l2, g2) = critic_loss(&self.critics.q2, xa.view(), y.view());
        self.opt_q1.step(&mut self.critics.q1, &g1);
        self.opt_q2.step(&mut self.critics.q2, &g2);

        let rho = T::lit(h.rho);
        self.critics.q1_target.soft_update(&self.critics.q1, rho);
        self.critics.q2_target.soft_update(&self.critics.q2, rho);

        let losses = StepLosses {
            v_loss: v_loss.as_f64(),
            q_loss: (l1 + l2).as_f64(),
            actor_loss: actor_loss.as_f64(),
            mean_awr_weight: weights.mean().map_or(0.0, |w| w.as_f64()),
        };
        if ![losses.v_loss, losses.q_loss, losses.actor_loss]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(RlError::NonFiniteLoss {
                step,
                v_loss: losses.v_loss,
                q_loss: losses.q_loss,
                actor_loss: losses.actor_loss,
            });
        }
        Ok(losses)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub losses: StepLosses,
}

#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    pub learner: IqlLearner<T>,
    pub log: Vec<LogRow>,
}

impl<T: Scalar> TrainOutput<T> {
    /// The actor in the on-disk precision.
    pub fn weights(&self) -> ActorNet<f32> {
        self.learner.actor.cast()
    }
}

/// Train on prepared transitions. The normalizer is fitted on the set's
/// observations. A batch larger than the set is reduced to the set size.
pub fn train_transitions<T: Scalar>(
    set: &TransitionSet<T>,
    hyper: &IqlHyper,
) -> Result<TrainOutput<T>, RlError> {
    hyper.validate()?;
    let norm = Normalizer::fit(set.observations().view());
    let mut learner = IqlLearner::new(norm, *hyper)?;
    let batch = hyper.batch.min(set.len());
    if batch < hyper.batch {
        log::warn!(
            "batch {} exceeds {} transitions, using {batch}",
            hyper.batch,
            set.len()
        );
    }
    let mut log = Vec::with_capacity(hyper.steps);
    let mut stream = set.stream(batch, hyper.seed)?;
    for step in 0..hyper.steps {
        let b = stream.next().expect("batch stream is endless");
        let losses = learner.step(&b, step)?;
        log.push(LogRow { step, losses });
    }
    Ok(TrainOutput { learner, log })
}

/// Train an `f32` learner on call trajectories.
pub fn train(
    calls: &[CallTrajectory],
    hyper: &IqlHyper,
    mode: RewardMode,
) -> Result<TrainOutput<f32>, RlError> {
    if calls.iter().all(|c| c.steps.is_empty()) {
        return Err(RlError::EmptyDataset);
    }
    let bad: Vec<String> = calls
        .iter()
        .filter(|c| c.validate().is_err())
        .map(|c| c.call_id.clone())
        .collect();
    if !bad.is_empty() {
        return Err(RlError::InvalidCalls(bad));
    }
    let set = TransitionSet::<f32>::from_calls(calls, |s| {
        compose_reward(s.r_audio, s.r_video, mode).expect("validated reward range")
    })?;
    train_transitions(&set, hyper)
}

pub fn write_log_csv<W: Write>(mut out: W, rows: &[LogRow]) -> std::io::Result<()> {
    writeln!(out, "step,v_loss,q_loss,actor_loss,mean_awr_weight")?;
    for r in rows {
        let l = &r.losses;
        writeln!(
            out,
            "{},{},{},{},{}",
            r.step, l.v_loss, l.q_loss, l.actor_loss, l.mean_awr_weight
        )?;
    }
    Ok(())
}

pub fn save_log_csv(rows: &[LogRow], path: impl AsRef<Path>) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_log_csv(&mut w, rows)?;
    w.flush()
}
