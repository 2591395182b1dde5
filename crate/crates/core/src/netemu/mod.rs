//! Packet-level emulation of one call leg over a trace-driven bottleneck.
//!
//! Each 60 ms boundary runs in a fixed order: deliver arrivals that landed
//! before the boundary, build the observation, query the estimator, apply
//! the new target to the sender, then emit and enqueue the window's packets.

mod link;
mod media;

pub use link::{EnqueueOutcome, Link, LinkConfig, LinkStats};
pub use media::{MediaBatch, MediaSource, MediaSourceConfig};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{CallTrajectory, Step};
use crate::features::{
    EmptyMiPolicy, FeatureError, MiStats, ReceiverState, LONG_MI_MS, SHORT_MI_MS,
};
use crate::packet::Packet;
use crate::policy::Estimator;
use crate::traces::Trace;

#[derive(Debug, Error)]
pub enum EmuError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("call duration {0} ms is shorter than one long MI")]
    TooShort(f64),
    #[error("trace covers {trace_ms} ms, call needs {call_ms} ms")]
    TraceTooShort { trace_ms: f64, call_ms: f64 },
    #[error("estimator returned {value} bps at step {step}")]
    BadAction { step: usize, value: f64 },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CallConfig {
    pub media: MediaSourceConfig,
    pub link: LinkConfig,
    pub empty_mi: EmptyMiPolicy,
    /// Keep every sent and delivered packet in the result.
    #[serde(default)]
    pub record_packets: bool,
}

#[derive(Debug, Clone)]
pub struct CallRun {
    /// One step per short MI; rewards are left at 0 for the caller to fill.
    pub trajectory: CallTrajectory,
    /// Receiver statistics of the MI following each action.
    pub outcomes: Vec<MiStats>,
    pub sent: Vec<Packet>,
    pub delivered: Vec<Packet>,
    pub stats: LinkStats,
    /// Steps whose target was below the audio rate.
    pub clamped_steps: usize,
}

/// Emulate one leg of `duration_ms` with the estimator in the loop.
pub fn run_call(
    trace: &Trace,
    policy: &mut dyn Estimator,
    cfg: &CallConfig,
    duration_ms: f64,
    seed: u64,
) -> Result<CallRun, EmuError> {
    if !(duration_ms >= LONG_MI_MS) {
        return Err(EmuError::TooShort(duration_ms));
    }
    let trace_ms = trace.total_duration_ms();
    if trace_ms < duration_ms {
        return Err(EmuError::TraceTooShort {
            trace_ms,
            call_ms: duration_ms,
        });
    }
    let steps = (duration_ms / SHORT_MI_MS).floor() as usize;

    let mut link = Link::new(trace.clone(), cfg.link, seed);
    let mut source = MediaSource::new(cfg.media, seed)?;
    let mut receiver = ReceiverState::new(cfg.empty_mi);
    let mut in_flight: VecDeque<Packet> = VecDeque::new();

    let mut out_steps = Vec::with_capacity(steps);
    let mut outcomes = Vec::with_capacity(steps);
    let mut sent = Vec::new();
    let mut delivered = Vec::new();
    let mut clamped_steps = 0;

    for k in 0..=steps {
        let t = k as f64 * SHORT_MI_MS;
        while in_flight
            .front()
            .is_some_and(|p| p.recv_ts_ms.is_some_and(|r| r < t))
        {
            let p = in_flight.pop_front().expect("checked non-empty");
            receiver.on_packet(&p);
            if cfg.record_packets {
                delivered.push(p);
            }
        }
        if k > 0 {
            outcomes.push(receiver.mi_features(t - SHORT_MI_MS, t));
        }
        if k == steps {
            break;
        }

        let obs = receiver.observation(k, t)?;
        let action = policy.estimate(&obs);
        if !(action.is_finite() && action > 0.0) {
            return Err(EmuError::BadAction {
                step: k,
                value: action,
            });
        }
        let (capacity, loss) = trace.window_mean(t, t + SHORT_MI_MS);
        out_steps.push(Step {
            observation: obs.into_values(),
            bandwidth_prediction_bps: action,
            r_audio: 0.0,
            r_video: 0.0,
            true_capacity_bps: Some(capacity),
            true_loss_rate: Some(loss),
        });

        let batch = source.generate(action, t, t + SHORT_MI_MS);
        clamped_steps += usize::from(batch.clamped);
        for p in batch.packets {
            in_flight.extend(link.drain(p.send_ts_ms));
            if cfg.record_packets {
                sent.push(p);
            }
            link.enqueue(p, p.send_ts_ms);
        }
        in_flight.extend(link.drain(t + SHORT_MI_MS));
    }

    Ok(CallRun {
        trajectory: CallTrajectory {
            call_id: format!("{}_{}", trace.family, seed),
            policy_id: policy.name(),
            steps: out_steps,
        },
        outcomes,
        sent,
        delivered,
        stats: link.stats(),
        clamped_steps,
    })
}
