//! Receiver-side monitor-interval statistics and the 150-dimensional
//! observation vector.
//!
//! Fifteen features are computed over each of the 5 most recent short (60 ms)
//! and 5 most recent long (600 ms) monitor intervals. Feature `f` (1-based)
//! occupies indices `(f-1)*10 .. (f-1)*10+4` for the short MIs and
//! `(f-1)*10+5 .. f*10-1` for the long MIs. Inside each 5-slot block slot 0 is
//! the most recent interval.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{MediaKind, Packet};

pub const SHORT_MI_MS: f64 = 60.0;
pub const LONG_MI_MS: f64 = 600.0;
pub const NUM_FEATURES: usize = 15;
pub const MIS_PER_SCALE: usize = 5;
pub const OBS_DIM: usize = NUM_FEATURES * 2 * MIS_PER_SCALE;
/// Fixed base subtracted from the mean delay in feature 5.
pub const BASE_DELAY_MS: f64 = 200.0;
/// A provisional loss is reversed if the missing packet shows up within this
/// long after the gap was detected.
pub const REORDER_WINDOW_MS: f64 = 400.0;
/// Arrival history kept by the receiver; enough for five long MIs.
pub const HISTORY_MS: f64 = LONG_MI_MS * MIS_PER_SCALE as f64;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "receiving_rate_bps",
    "packet_count",
    "byte_count",
    "queuing_delay_ms",
    "delay_ms",
    "min_seen_delay_ms",
    "delay_ratio",
    "delay_avg_min_diff_ms",
    "mean_interarrival_ms",
    "jitter_ms",
    "loss_ratio",
    "avg_loss_burst_len",
    "p_video",
    "p_audio",
    "p_probe",
];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("expected {expected} {what} MIs, got {got}")]
    WrongCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("observation must have {OBS_DIM} values, got {0}")]
    WrongLength(usize),
    #[error("observation value at index {0} is not finite")]
    NonFinite(usize),
}

/// Statistics of one monitor interval, in feature order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MiStats {
    pub receiving_rate_bps: f64,
    pub packet_count: f64,
    pub byte_count: f64,
    pub queuing_delay_ms: f64,
    pub delay_ms: f64,
    pub min_seen_delay_ms: f64,
    pub delay_ratio: f64,
    pub delay_avg_min_diff_ms: f64,
    pub mean_interarrival_ms: f64,
    pub jitter_ms: f64,
    pub loss_ratio: f64,
    pub avg_loss_burst_len: f64,
    pub p_video: f64,
    pub p_audio: f64,
    pub p_probe: f64,
}

impl MiStats {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [
            self.receiving_rate_bps,
            self.packet_count,
            self.byte_count,
            self.queuing_delay_ms,
            self.delay_ms,
            self.min_seen_delay_ms,
            self.delay_ratio,
            self.delay_avg_min_diff_ms,
            self.mean_interarrival_ms,
            self.jitter_ms,
            self.loss_ratio,
            self.avg_loss_burst_len,
            self.p_video,
            self.p_audio,
            self.p_probe,
        ]
    }

    pub fn from_array(a: [f64; NUM_FEATURES]) -> Self {
        Self {
            receiving_rate_bps: a[0],
            packet_count: a[1],
            byte_count: a[2],
            queuing_delay_ms: a[3],
            delay_ms: a[4],
            min_seen_delay_ms: a[5],
            delay_ratio: a[6],
            delay_avg_min_diff_ms: a[7],
            mean_interarrival_ms: a[8],
            jitter_ms: a[9],
            loss_ratio: a[10],
            avg_loss_burst_len: a[11],
            p_video: a[12],
            p_audio: a[13],
            p_probe: a[14],
        }
    }
}

/// What an interval without received packets reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyMiPolicy {
    /// Every feature is 0.
    #[default]
    AllZero,
    /// Zeros, except the carried minimum seen delay and `delay = -200`.
    Literal,
}

/// Index of feature `feature` (1-based) in slot `slot` of the short block.
pub fn short_index(feature: usize, slot: usize) -> usize {
    (feature - 1) * 10 + slot
}

/// Index of feature `feature` (1-based) in slot `slot` of the long block.
pub fn long_index(feature: usize, slot: usize) -> usize {
    (feature - 1) * 10 + MIS_PER_SCALE + slot
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step: usize,
    values: Vec<f64>,
}

impl Observation {
    pub fn new(step: usize, values: Vec<f64>) -> Result<Self, FeatureError> {
        if values.len() != OBS_DIM {
            return Err(FeatureError::WrongLength(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite(i));
        }
        Ok(Self { step, values })
    }

    pub fn zeros(step: usize) -> Self {
        Self {
            step,
            values: vec![0.0; OBS_DIM],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Short-MI value of a feature; slot 0 is the latest interval.
    pub fn short(&self, feature: usize, slot: usize) -> f64 {
        self.values[short_index(feature, slot)]
    }

    pub fn long(&self, feature: usize, slot: usize) -> f64 {
        self.values[long_index(feature, slot)]
    }

    /// The latest short MI, decoded back into named statistics.
    pub fn latest_short(&self) -> MiStats {
        let mut a = [0.0; NUM_FEATURES];
        for (f, v) in a.iter_mut().enumerate() {
            *v = self.short(f + 1, 0);
        }
        MiStats::from_array(a)
    }
}

/// Lay out 5 short and 5 long MIs (most recent first) into an observation.
pub fn assemble(
    step: usize,
    shorts: &[MiStats],
    longs: &[MiStats],
) -> Result<Observation, FeatureError> {
    if shorts.len() != MIS_PER_SCALE {
        return Err(FeatureError::WrongCount {
            what: "short",
            expected: MIS_PER_SCALE,
            got: shorts.len(),
        });
    }
    if longs.len() != MIS_PER_SCALE {
        return Err(FeatureError::WrongCount {
            what: "long",
            expected: MIS_PER_SCALE,
            got: longs.len(),
        });
    }
    let mut values = vec![0.0; OBS_DIM];
    for (slot, (s, l)) in shorts.iter().zip(longs).enumerate() {
        for (f0, (sv, lv)) in s.to_array().into_iter().zip(l.to_array()).enumerate() {
            values[short_index(f0 + 1, slot)] = sv;
            values[long_index(f0 + 1, slot)] = lv;
        }
    }
    Observation::new(step, values)
}

#[derive(Debug, Clone, Copy)]
struct Arrival {
    kind: MediaKind,
    size_bytes: u32,
    recv_ms: f64,
    delay_ms: f64,
}

/// Per-leg receiver bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct ReceiverState {
    empty_policy: EmptyMiPolicy,
    min_seen_delay_ms: Option<f64>,
    last_arrival_ms: Option<f64>,
    highest_seq: Option<u64>,
    arrivals: VecDeque<Arrival>,
    // provisional losses: seq -> detection time
    lost: BTreeMap<u64, f64>,
}

impl ReceiverState {
    pub fn new(empty_policy: EmptyMiPolicy) -> Self {
        Self {
            empty_policy,
            ..Self::default()
        }
    }

    pub fn min_seen_delay_ms(&self) -> Option<f64> {
        self.min_seen_delay_ms
    }

    pub fn last_arrival_ms(&self) -> Option<f64> {
        self.last_arrival_ms
    }

    pub fn highest_seq(&self) -> Option<u64> {
        self.highest_seq
    }

    /// Packets currently counted as lost (not yet filled).
    pub fn provisional_losses(&self) -> usize {
        self.lost.len()
    }

    /// Record a delivered packet. Packets without a receive timestamp are
    /// ignored. Arrivals must be fed in receive-time order.
    pub fn on_packet(&mut self, p: &Packet) {
        let Some(recv_ms) = p.recv_ts_ms else {
            return;
        };
        let delay_ms = recv_ms - p.send_ts_ms;
        self.min_seen_delay_ms = Some(self.min_seen_delay_ms.map_or(delay_ms, |m| m.min(delay_ms)));
        self.last_arrival_ms = Some(recv_ms);

        let next_expected = self.highest_seq.map_or(0, |h| h + 1);
        if p.seq >= next_expected {
            for missing in next_expected..p.seq {
                self.lost.insert(missing, recv_ms);
            }
            self.highest_seq = Some(p.seq);
        } else if let Some(&detected) = self.lost.get(&p.seq) {
            if recv_ms - detected <= REORDER_WINDOW_MS {
                self.lost.remove(&p.seq);
            }
        }

        self.arrivals.push_back(Arrival {
            kind: p.kind,
            size_bytes: p.size_bytes,
            recv_ms,
            delay_ms,
        });
        let horizon = recv_ms - HISTORY_MS - SHORT_MI_MS;
        while self.arrivals.front().is_some_and(|a| a.recv_ms < horizon) {
            self.arrivals.pop_front();
        }
        // detection times are non-decreasing in seq, so prune from the front
        while self
            .lost
            .first_key_value()
            .is_some_and(|(_, &d)| d < horizon)
        {
            self.lost.pop_first();
        }
    }

    /// Statistics of the interval `[t0, t1)`. Call once every arrival with a
    /// receive time before `t1` has been recorded.
    pub fn mi_features(&self, t0: f64, t1: f64) -> MiStats {
        let mut n = 0usize;
        let mut bytes = 0u64;
        let mut delay_sum = 0.0;
        let mut delay_min = f64::INFINITY;
        let mut kinds = [0usize; 3];
        let mut prev_recv: Option<f64> = None;
        let mut gaps = Vec::new();
        let lo = self.arrivals.partition_point(|a| a.recv_ms < t0);
        let hi = self.arrivals.partition_point(|a| a.recv_ms < t1).max(lo);
        for a in self.arrivals.range(lo..hi) {
            n += 1;
            bytes += u64::from(a.size_bytes);
            delay_sum += a.delay_ms;
            delay_min = delay_min.min(a.delay_ms);
            kinds[kind_slot(a.kind)] += 1;
            if let Some(prev) = prev_recv {
                gaps.push(a.recv_ms - prev);
            }
            prev_recv = Some(a.recv_ms);
        }

        if n == 0 {
            return match self.empty_policy {
                EmptyMiPolicy::AllZero => MiStats::default(),
                EmptyMiPolicy::Literal => MiStats {
                    delay_ms: -BASE_DELAY_MS,
                    min_seen_delay_ms: self.min_seen_delay_ms.unwrap_or(0.0),
                    ..MiStats::default()
                },
            };
        }

        let nf = n as f64;
        let mean_delay = delay_sum / nf;
        let min_seen = self.min_seen_delay_ms.unwrap_or(delay_min);
        let (mean_gap, jitter) = mean_std(&gaps);

        let mut lost_count = 0usize;
        let mut bursts = 0usize;
        let mut prev_lost: Option<u64> = None;
        for (&seq, _) in self.lost.iter().filter(|(_, &d)| d >= t0 && d < t1) {
            lost_count += 1;
            if prev_lost.is_none_or(|p| p + 1 != seq) {
                bursts += 1;
            }
            prev_lost = Some(seq);
        }
        let lost = lost_count as f64;

        MiStats {
            receiving_rate_bps: bytes as f64 * 8000.0 / (t1 - t0),
            packet_count: nf,
            byte_count: bytes as f64,
            queuing_delay_ms: (mean_delay - min_seen).max(0.0),
            delay_ms: mean_delay - BASE_DELAY_MS,
            min_seen_delay_ms: min_seen,
            delay_ratio: if delay_min > 0.0 {
                mean_delay / delay_min
            } else {
                1.0
            },
            delay_avg_min_diff_ms: mean_delay - delay_min,
            mean_interarrival_ms: mean_gap,
            jitter_ms: jitter,
            loss_ratio: lost / (lost + nf),
            avg_loss_burst_len: if bursts > 0 {
                lost / bursts as f64
            } else {
                0.0
            },
            p_video: kinds[kind_slot(MediaKind::Video)] as f64 / nf,
            p_audio: kinds[kind_slot(MediaKind::Audio)] as f64 / nf,
            p_probe: kinds[kind_slot(MediaKind::Probe)] as f64 / nf,
        }
    }

    pub fn short_mis(&self, t_ms: f64) -> Vec<MiStats> {
        self.window_mis(t_ms, SHORT_MI_MS)
    }

    pub fn long_mis(&self, t_ms: f64) -> Vec<MiStats> {
        self.window_mis(t_ms, LONG_MI_MS)
    }

    fn window_mis(&self, t_ms: f64, len_ms: f64) -> Vec<MiStats> {
        (0..MIS_PER_SCALE)
            .map(|i| {
                let t1 = t_ms - len_ms * i as f64;
                self.mi_features(t1 - len_ms, t1)
            })
            .collect()
    }

    /// Observation at the MI boundary `t_ms`.
    pub fn observation(&self, step: usize, t_ms: f64) -> Result<Observation, FeatureError> {
        assemble(step, &self.short_mis(t_ms), &self.long_mis(t_ms))
    }
}

fn kind_slot(kind: MediaKind) -> usize {
    match kind {
        MediaKind::Video => 0,
        MediaKind::Audio => 1,
        MediaKind::Probe => 2,
    }
}

/// Mean and population standard deviation; `(0, 0)` for an empty slice.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Debug dump: one row per MI with a header of feature names.
pub fn write_mi_csv<W: Write>(mut out: W, rows: &[MiStats]) -> std::io::Result<()> {
    writeln!(out, "{}", FEATURE_NAMES.join(","))?;
    for row in rows {
        let line: Vec<String> = row.to_array().iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
