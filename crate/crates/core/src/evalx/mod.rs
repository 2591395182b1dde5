//! Estimation accuracy metrics, proxy quality rewards and the call score.
//!
//! The proxy rewards are stand-ins for learned audio/video quality models.
//! Absolute scores are only comparable between runs of this workbench.

mod report;

pub use report::{
    boxplot_svg, percentile, report, write_report_csv, BoxStats, FamilyResult, REPORT_COLUMNS,
    REPORT_FILE,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{CallTrajectory, MOS_MAX};
use crate::features::MiStats;
use crate::netemu::CallRun;
use crate::scalar::Scalar;
use crate::seeds::{self, Stream};

pub const BPS_PER_MBPS: f64 = 1e6;
pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records")]
    Empty,
    #[error("record {index}: capacity must be positive, got {value}")]
    Capacity { index: usize, value: f64 },
    #[error("call {0} has no ground-truth capacity")]
    NoGroundTruth(String),
    #[error("{len_a} steps but {len_b} outcomes")]
    Length { len_a: usize, len_b: usize },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One step of a call: the estimate, the truth, and what the network did
/// during the following MI.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepRecord<T = f64> {
    pub predicted_bps: T,
    pub capacity_bps: T,
    pub receiving_rate_bps: T,
    pub delay_ms: T,
    pub queuing_delay_ms: T,
    pub loss_ratio: T,
}

impl<T: Scalar> StepRecord<T> {
    pub fn accuracy(predicted_bps: T, capacity_bps: T) -> Self {
        Self {
            predicted_bps,
            capacity_bps,
            receiving_rate_bps: T::zero(),
            delay_ms: T::zero(),
            queuing_delay_ms: T::zero(),
            loss_ratio: T::zero(),
        }
    }

    /// Relative over- and under-estimation of this step.
    pub fn errors(&self) -> (T, T) {
        let rel = (self.predicted_bps - self.capacity_bps) / self.capacity_bps;
        (rel.max(T::zero()), (-rel).max(T::zero()))
    }
}

fn check<T: Scalar>(records: &[StepRecord<T>]) -> Result<(), EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(i) = records.iter().position(|r| !(r.capacity_bps > T::zero())) {
        return Err(EvalError::Capacity {
            index: i,
            value: records[i].capacity_bps.as_f64(),
        });
    }
    Ok(())
}

fn mean_of<T: Scalar>(
    records: &[StepRecord<T>],
    f: impl Fn(&StepRecord<T>) -> T,
) -> Result<T, EvalError> {
    check(records)?;
    Ok(records.iter().map(f).sum::<T>() / T::lit(records.len() as f64))
}

/// Mean squared error in bps².
pub fn mse<T: Scalar>(records: &[StepRecord<T>]) -> Result<T, EvalError> {
    mean_of(records, |r| (r.predicted_bps - r.capacity_bps).powi(2))
}

pub fn mse_mbps2<T: Scalar>(records: &[StepRecord<T>]) -> Result<T, EvalError> {
    Ok(mse(records)? / T::lit(BPS_PER_MBPS * BPS_PER_MBPS))
}

/// Mean relative overestimation.
pub fn e_plus<T: Scalar>(records: &[StepRecord<T>]) -> Result<T, EvalError> {
    mean_of(records, |r| r.errors().0)
}

/// Mean relative underestimation.
pub fn e_minus<T: Scalar>(records: &[StepRecord<T>]) -> Result<T, EvalError> {
    mean_of(records, |r| r.errors().1)
}

/// Records of an emulated call; the trajectory must carry ground truth.
pub fn records_from_run(run: &CallRun) -> Result<Vec<StepRecord>, EvalError> {
    let steps = &run.trajectory.steps;
    if steps.len() != run.outcomes.len() {
        return Err(EvalError::Length {
            len_a: steps.len(),
            len_b: run.outcomes.len(),
        });
    }
    steps
        .iter()
        .zip(&run.outcomes)
        .map(|(s, o)| {
            let c = s
                .true_capacity_bps
                .ok_or_else(|| EvalError::NoGroundTruth(run.trajectory.call_id.clone()))?;
            Ok(StepRecord {
                predicted_bps: s.bandwidth_prediction_bps,
                capacity_bps: c,
                receiving_rate_bps: o.receiving_rate_bps,
                delay_ms: o.delay_ms,
                queuing_delay_ms: o.queuing_delay_ms,
                loss_ratio: o.loss_ratio,
            })
        })
        .collect()
}

/// Decreasing logistic gate with `g(0) = 1`:
/// `g(x) = (1 + e^(-m/w)) / (1 + e^((x - m)/w))`.
pub fn gate(x: f64, mid: f64, width: f64) -> f64 {
    (1.0 + (-mid / width).exp()) / (1.0 + ((x - mid) / width).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyRewardConfig {
    pub audio_loss_mid: f64,
    pub audio_loss_width: f64,
    pub audio_delay_mid_ms: f64,
    pub audio_delay_width_ms: f64,
    pub video_loss_mid: f64,
    pub video_loss_width: f64,
    pub video_delay_mid_ms: f64,
    pub video_delay_width_ms: f64,
    /// Utilization reference when no ground-truth capacity is known.
    pub reference_bps: f64,
}

impl Default for ProxyRewardConfig {
    fn default() -> Self {
        Self {
            audio_loss_mid: 0.1,
            audio_loss_width: 0.02,
            audio_delay_mid_ms: 150.0,
            audio_delay_width_ms: 25.0,
            video_loss_mid: 0.05,
            video_loss_width: 0.01,
            video_delay_mid_ms: 100.0,
            video_delay_width_ms: 15.0,
            reference_bps: 4e6,
        }
    }
}

/// `(r_audio, r_video)` for one MI outcome:
///
/// ```text
/// r_audio = 5 (1 - l) g(l; 0.1, 0.02) g(q; 150, 25)
/// r_video = 5 u (1 - l) g(l; 0.05, 0.01) g(q; 100, 15)
/// ```
///
/// with loss ratio `l`, queuing delay `q` in ms and utilization
/// `u = min(1, recv / capacity)`. An MI with no arrivals scores `(0, 0)`.
pub fn proxy_rewards(
    outcome: &MiStats,
    capacity_bps: Option<f64>,
    cfg: &ProxyRewardConfig,
) -> (f64, f64) {
    if outcome.packet_count <= 0.0 {
        return (0.0, 0.0);
    }
    let l = outcome.loss_ratio.clamp(0.0, 1.0);
    let q = outcome.queuing_delay_ms.max(0.0);
    let reference = capacity_bps.unwrap_or(cfg.reference_bps);
    let u = (outcome.receiving_rate_bps / reference).clamp(0.0, 1.0);
    let audio = MOS_MAX
        * (1.0 - l)
        * gate(l, cfg.audio_loss_mid, cfg.audio_loss_width)
        * gate(q, cfg.audio_delay_mid_ms, cfg.audio_delay_width_ms);
    let video = MOS_MAX
        * u
        * (1.0 - l)
        * gate(l, cfg.video_loss_mid, cfg.video_loss_width)
        * gate(q, cfg.video_delay_mid_ms, cfg.video_delay_width_ms);
    (audio.clamp(0.0, MOS_MAX), video.clamp(0.0, MOS_MAX))
}

/// Fill the trajectory's rewards from the run's outcomes.
pub fn attach_proxy_rewards(run: &mut CallRun, cfg: &ProxyRewardConfig) {
    for (step, outcome) in run.trajectory.steps.iter_mut().zip(&run.outcomes) {
        let (a, v) = proxy_rewards(outcome, step.true_capacity_bps, cfg);
        step.r_audio = a;
        step.r_video = v;
    }
}

/// Temporal means of one leg's rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegScore {
    pub mean_audio: f64,
    pub mean_video: f64,
    pub steps: usize,
}

impl LegScore {
    pub fn from_call(call: &CallTrajectory) -> Result<Self, EvalError> {
        let n = call.steps.len();
        if n == 0 {
            return Err(EvalError::Empty);
        }
        let nf = n as f64;
        Ok(Self {
            mean_audio: call.steps.iter().map(|s| s.r_audio).sum::<f64>() / nf,
            mean_video: call.steps.iter().map(|s| s.r_video).sum::<f64>() / nf,
            steps: n,
        })
    }

    pub fn score(&self) -> f64 {
        self.mean_audio + self.mean_video
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub s: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub legs: usize,
}

/// Mean leg score with a percentile bootstrap 95% interval over legs.
pub fn score(legs: &[LegScore], resamples: usize, seed: u64) -> Result<ScoreSummary, EvalError> {
    if legs.is_empty() {
        return Err(EvalError::Empty);
    }
    let per_leg: Vec<f64> = legs.iter().map(LegScore::score).collect();
    let n = per_leg.len();
    let s = per_leg.iter().sum::<f64>() / n as f64;
    let mut rng = seeds::substream(seed, Stream::Bootstrap);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| per_leg[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = if means.is_empty() {
        (s, s)
    } else {
        (percentile(&means, 2.5), percentile(&means, 97.5))
    };
    Ok(ScoreSummary {
        s,
        ci_low,
        ci_high,
        legs: n,
    })
}
