//! Single bottleneck: stochastic loss, then a drop-tail FIFO drained at the
//! trace capacity, then a fixed propagation delay.
//!
//! Transmission end times are fixed when a packet is admitted, by
//! integrating the piecewise-constant capacity from the moment the link
//! becomes free.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::packet::Packet;
use crate::seeds::{self, Stream};
use crate::traces::{LossModel, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub propagation_delay_ms: f64,
    /// Drop-tail horizon: the queue holds at most this many milliseconds of
    /// traffic at the current capacity.
    pub max_queue_ms: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            propagation_delay_ms: 40.0,
            max_queue_ms: 500.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Queued,
    DroppedTail,
    DroppedLoss,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub offered: u64,
    pub queued: u64,
    pub dropped_tail: u64,
    pub dropped_loss: u64,
    pub delivered: u64,
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    packet: Packet,
    start_ms: f64,
    done_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Link {
    trace: Trace,
    cfg: LinkConfig,
    queue: VecDeque<InFlight>,
    busy_until_ms: f64,
    last_drain_ms: f64,
    rng: ChaCha8Rng,
    gilbert_bad: bool,
    stats: LinkStats,
}

impl Link {
    pub fn new(trace: Trace, cfg: LinkConfig, seed: u64) -> Self {
        Self {
            trace,
            cfg,
            queue: VecDeque::new(),
            busy_until_ms: 0.0,
            last_drain_ms: 0.0,
            rng: seeds::substream(seed, Stream::Loss),
            gilbert_bad: false,
            stats: LinkStats::default(),
        }
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    fn capacity_at(&self, t_ms: f64) -> f64 {
        self.trace.segments[self.trace.segment_index_clamped(t_ms)].capacity_bps
    }

    /// Byte bound of the queue at the capacity in force at `t_ms`.
    pub fn queue_limit_bytes(&self, t_ms: f64) -> f64 {
        self.capacity_at(t_ms) * self.cfg.max_queue_ms / 8000.0
    }

    /// Bytes admitted but not yet fully serialized at `t_ms`.
    pub fn queued_bytes(&self, t_ms: f64) -> u64 {
        self.queue
            .iter()
            .rev()
            .take_while(|f| f.done_ms > t_ms)
            .map(|f| u64::from(f.packet.size_bytes))
            .sum()
    }

    /// Time at which `bits` starting to serialize at `start_ms` finish.
    pub fn transmit_end(&self, start_ms: f64, bits: f64) -> f64 {
        let bounds = self.trace.boundaries_ms();
        let mut idx = self.trace.segment_index_clamped(start_ms);
        let mut t = start_ms;
        let mut remaining = bits;
        loop {
            let rate_per_ms = self.trace.segments[idx].capacity_bps / 1000.0;
            let last = idx + 1 == self.trace.segments.len();
            let seg_end = bounds[idx + 1];
            if last || remaining <= rate_per_ms * (seg_end - t) {
                return t + remaining / rate_per_ms;
            }
            remaining -= rate_per_ms * (seg_end - t);
            t = seg_end;
            idx += 1;
        }
    }

    fn loss_draw(&mut self, model: LossModel) -> bool {
        match model {
            LossModel::None => false,
            LossModel::Bernoulli { p } => self.rng.random::<f64>() < p,
            LossModel::Gilbert {
                p_enter,
                mean_burst_len,
            } => {
                let u: f64 = self.rng.random();
                self.gilbert_bad = if self.gilbert_bad {
                    u >= 1.0 / mean_burst_len
                } else {
                    u < p_enter
                };
                self.gilbert_bad
            }
        }
    }

    /// Evict not-yet-started packets from the tail while the backlog exceeds
    /// the bound (the bound shrinks when capacity drops).
    fn trim_tail(&mut self, now_ms: f64, limit: f64) {
        let mut backlog = self.queued_bytes(now_ms) as f64;
        while backlog > limit {
            match self.queue.back() {
                Some(f) if f.start_ms > now_ms => {
                    backlog -= f64::from(f.packet.size_bytes);
                    self.queue.pop_back();
                    self.stats.dropped_tail += 1;
                    self.stats.queued -= 1;
                }
                _ => break,
            }
        }
        self.busy_until_ms = self
            .queue
            .back()
            .map_or(self.busy_until_ms.min(now_ms), |f| f.done_ms);
    }

    pub fn enqueue(&mut self, packet: Packet, now_ms: f64) -> EnqueueOutcome {
        debug_assert!(now_ms >= packet.send_ts_ms);
        self.stats.offered += 1;
        let seg = &self.trace.segments[self.trace.segment_index_clamped(now_ms)];
        let loss = seg.loss;
        if self.loss_draw(loss) {
            self.stats.dropped_loss += 1;
            return EnqueueOutcome::DroppedLoss;
        }
        let limit = self.queue_limit_bytes(now_ms);
        self.trim_tail(now_ms, limit);
        let backlog = self.queued_bytes(now_ms) as f64;
        if backlog + f64::from(packet.size_bytes) > limit {
            self.stats.dropped_tail += 1;
            return EnqueueOutcome::DroppedTail;
        }
        let start_ms = self.busy_until_ms.max(now_ms);
        let done_ms = self.transmit_end(start_ms, packet.bits());
        self.busy_until_ms = done_ms;
        self.queue.push_back(InFlight {
            packet,
            start_ms,
            done_ms,
        });
        self.stats.queued += 1;
        EnqueueOutcome::Queued
    }

    /// Hand over every packet whose serialization completes by `until_ms`,
    /// stamped with `completion + propagation delay`.
    pub fn drain(&mut self, until_ms: f64) -> Vec<Packet> {
        debug_assert!(
            until_ms >= self.last_drain_ms,
            "drain back in time: {until_ms} < {}",
            self.last_drain_ms
        );
        self.last_drain_ms = self.last_drain_ms.max(until_ms);
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|f| f.done_ms <= until_ms) {
            let f = self.queue.pop_front().expect("checked non-empty");
            let mut p = f.packet;
            p.recv_ts_ms = Some(f.done_ms + self.cfg.propagation_delay_ms);
            out.push(p);
        }
        self.stats.delivered += out.len() as u64;
        out
    }

    pub fn in_queue(&self) -> usize {
        self.queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::MediaKind;
    use crate::traces::{fixed, Family, TraceSegment};

    fn link(cap: f64, loss: LossModel) -> Link {
        Link::new(
            fixed(cap, loss, 600_000.0),
            LinkConfig {
                propagation_delay_ms: 10.0,
                max_queue_ms: 500.0,
            },
            1,
        )
    }

    fn pkt(seq: u64, t: f64) -> Packet {
        Packet::new(seq, MediaKind::Video, 1250, t)
    }

    #[test]
    fn empty_queue_accepts() {
        let mut l = link(1e6, LossModel::None);
        assert_eq!(l.enqueue(pkt(0, 0.0), 0.0), EnqueueOutcome::Queued);
    }

    #[test]
    fn saturated_queue_drops_tail() {
        let mut l = link(1e6, LossModel::None);
        // 1 Mbps * 500 ms = 62_500 bytes = 50 packets
        for s in 0..50 {
            assert_eq!(l.enqueue(pkt(s, 0.0), 0.0), EnqueueOutcome::Queued);
        }
        assert_eq!(l.queued_bytes(0.0), 62_500);
        assert_eq!(l.enqueue(pkt(50, 0.0), 0.0), EnqueueOutcome::DroppedTail);
    }

    #[test]
    fn certain_loss_drops_everything() {
        let mut l = link(1e6, LossModel::Bernoulli { p: 1.0 });
        for s in 0..100 {
            assert_eq!(
                l.enqueue(pkt(s, s as f64), s as f64),
                EnqueueOutcome::DroppedLoss
            );
        }
    }

    #[test]
    fn serialization_and_propagation() {
        let mut l = link(1e6, LossModel::None);
        l.enqueue(pkt(0, 0.0), 0.0);
        l.enqueue(pkt(1, 0.0), 0.0);
        let out = l.drain(100.0);
        assert_eq!(out.len(), 2);
        assert!((out[0].recv_ts_ms.unwrap() - 20.0).abs() < 1e-9);
        assert!((out[1].recv_ts_ms.unwrap() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn drain_of_empty_link_is_empty() {
        let mut l = link(1e6, LossModel::None);
        assert!(l.drain(1000.0).is_empty());
    }

    #[test]
    fn serialization_spans_capacity_change() {
        let trace = Trace {
            family: Family::FluctuatingBw,
            seed: 0,
            segments: vec![
                TraceSegment {
                    duration_ms: 5.0,
                    capacity_bps: 1e6,
                    loss: LossModel::None,
                },
                TraceSegment {
                    duration_ms: 100.0,
                    capacity_bps: 2e6,
                    loss: LossModel::None,
                },
            ],
        };
        let l = Link::new(trace, LinkConfig::default(), 0);
        // 10_000 bits: 5_000 at 1 Mbps in 5 ms, the rest at 2 Mbps in 2.5 ms
        assert!((l.transmit_end(0.0, 10_000.0) - 7.5).abs() < 1e-12);
    }

    #[test]
    fn capacity_drop_trims_tail() {
        let trace = Trace {
            family: Family::FluctuatingBw,
            seed: 0,
            segments: vec![
                TraceSegment {
                    duration_ms: 10.0,
                    capacity_bps: 4e6,
                    loss: LossModel::None,
                },
                TraceSegment {
                    duration_ms: 10_000.0,
                    capacity_bps: 1e5,
                    loss: LossModel::None,
                },
            ],
        };
        let mut l = Link::new(
            trace,
            LinkConfig {
                propagation_delay_ms: 0.0,
                max_queue_ms: 500.0,
            },
            0,
        );
        for s in 0..100 {
            l.enqueue(pkt(s, 0.0), 0.0);
        }
        l.enqueue(pkt(100, 10.0), 10.0);
        assert!(l.queued_bytes(10.0) as f64 <= l.queue_limit_bytes(10.0));
        assert!(l.stats().dropped_tail > 0);
    }

    #[test]
    fn gilbert_long_run_rate() {
        let model = LossModel::Gilbert {
            p_enter: 0.02,
            mean_burst_len: 3.0,
        };
        let mut l = link(1e9, model);
        let n = 200_000;
        let lost = (0..n)
            .filter(|&s| {
                l.enqueue(
                    Packet::new(s, MediaKind::Audio, 60, s as f64 * 0.01),
                    s as f64 * 0.01,
                ) == EnqueueOutcome::DroppedLoss
            })
            .count();
        let rate = lost as f64 / n as f64;
        assert!((rate - model.mean_loss_rate()).abs() < 0.01, "{rate}");
    }
}
