//! Sender stand-in: constant-rate audio, paced video frames sized from the
//! residual budget, and evenly spread probe packets.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmuError;
use crate::packet::{MediaKind, Packet};
use crate::seeds::{self, Stream};

/// Probe bytes are held back until a packet of at least this size can be sent.
const MIN_PROBE_BYTES: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediaSourceConfig {
    pub audio_bps: f64,
    pub audio_ptime_ms: f64,
    pub video_frame_interval_ms: f64,
    pub video_packet_mtu_bytes: u32,
    pub probe_fraction: f64,
    /// Relative frame-size jitter: weights drawn from `1 ± jitter`.
    pub video_size_jitter: f64,
}

impl Default for MediaSourceConfig {
    fn default() -> Self {
        Self {
            audio_bps: 25_000.0,
            audio_ptime_ms: 20.0,
            video_frame_interval_ms: 1000.0 / 30.0,
            video_packet_mtu_bytes: 1250,
            probe_fraction: 0.05,
            video_size_jitter: 0.2,
        }
    }
}

impl MediaSourceConfig {
    pub fn validate(&self) -> Result<(), EmuError> {
        let positive = [
            ("audio_bps", self.audio_bps),
            ("audio_ptime_ms", self.audio_ptime_ms),
            ("video_frame_interval_ms", self.video_frame_interval_ms),
            (
                "video_packet_mtu_bytes",
                f64::from(self.video_packet_mtu_bytes),
            ),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EmuError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(0.0..=0.2).contains(&self.probe_fraction) {
            return Err(EmuError::Config(format!(
                "probe_fraction {} outside [0, 0.2]",
                self.probe_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.video_size_jitter) {
            return Err(EmuError::Config(format!(
                "video_size_jitter {} outside [0, 1)",
                self.video_size_jitter
            )));
        }
        Ok(())
    }
}

/// Packets for one window, sorted by send time, with fresh sequence numbers.
#[derive(Debug, Clone, Default)]
pub struct MediaBatch {
    pub packets: Vec<Packet>,
    /// The target was below the audio rate and only audio was sent.
    pub clamped: bool,
}

impl MediaBatch {
    pub fn total_bytes(&self) -> u64 {
        self.packets.iter().map(|p| u64::from(p.size_bytes)).sum()
    }
}

#[derive(Debug, Clone)]
pub struct MediaSource {
    cfg: MediaSourceConfig,
    rng: ChaCha8Rng,
    next_seq: u64,
    next_audio_ms: f64,
    next_frame: f64,
    frame_weight: f64,
    audio_carry: f64,
    video_carry: f64,
    probe_carry: f64,
}

impl MediaSource {
    pub fn new(cfg: MediaSourceConfig, seed: u64) -> Result<Self, EmuError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            rng: seeds::substream(seed, Stream::VideoJitter),
            next_seq: 0,
            next_audio_ms: 0.0,
            next_frame: 0.0,
            frame_weight: 1.0,
            audio_carry: 0.0,
            video_carry: 0.0,
            probe_carry: 0.0,
        })
    }

    pub fn config(&self) -> &MediaSourceConfig {
        &self.cfg
    }

    /// Emit the packets of window `[t0, t1)` for the given target rate.
    /// Windows must be contiguous and increasing.
    pub fn generate(&mut self, target_bps: f64, t0: f64, t1: f64) -> MediaBatch {
        let cfg = self.cfg;
        let mut out: Vec<(MediaKind, u32, f64)> = Vec::new();

        let audio_bytes_per_packet = cfg.audio_bps * cfg.audio_ptime_ms / 8000.0;
        let mut audio_sent = 0.0;
        while self.next_audio_ms < t1 {
            self.audio_carry += audio_bytes_per_packet;
            let size = self.audio_carry.floor().max(1.0);
            self.audio_carry -= size;
            out.push((MediaKind::Audio, size as u32, self.next_audio_ms.max(t0)));
            audio_sent += size;
            self.next_audio_ms += cfg.audio_ptime_ms;
        }

        let clamped = target_bps < cfg.audio_bps;
        let residual = if clamped {
            0.0
        } else {
            (target_bps * (t1 - t0) / 8000.0 - audio_sent).max(0.0)
        };
        let probe_budget = (cfg.probe_fraction * target_bps * (t1 - t0) / 8000.0).min(residual);
        let video_budget = residual - probe_budget;

        self.video_carry += video_budget;
        // the frame clock runs even while video is off
        let pieces = self.frame_pieces(t0, t1);
        if clamped {
            self.video_carry = 0.0;
        } else {
            let pool = self.video_carry.floor();
            if pool >= 1.0 {
                self.video_carry -= pool;
                pace(&mut out, &pieces, pool as u64, cfg.video_packet_mtu_bytes);
            }
        }

        self.probe_carry += probe_budget;
        if clamped {
            self.probe_carry = 0.0;
        } else if self.probe_carry >= MIN_PROBE_BYTES {
            let bytes = self.probe_carry.floor();
            self.probe_carry -= bytes;
            push_split(
                &mut out,
                MediaKind::Probe,
                bytes as u64,
                cfg.video_packet_mtu_bytes,
                t0,
                t1 - t0,
            );
        }

        out.sort_by(|a, b| a.2.total_cmp(&b.2));
        let packets = out
            .into_iter()
            .map(|(kind, size, ts)| {
                let p = Packet::new(self.next_seq, kind, size, ts);
                self.next_seq += 1;
                p
            })
            .collect();
        MediaBatch { packets, clamped }
    }
}

impl MediaSource {
    /// `[t0, t1)` cut at frame start times, each piece with the size weight
    /// of the frame it belongs to. The first piece continues the frame that
    /// was running at `t0`.
    fn frame_pieces(&mut self, t0: f64, t1: f64) -> Vec<(f64, f64, f64)> {
        let cfg = self.cfg;
        let mut pieces = Vec::new();
        let mut start = t0;
        loop {
            let next = self.next_frame * cfg.video_frame_interval_ms;
            let end = next.min(t1);
            if end > start {
                pieces.push((start, end - start, self.frame_weight));
            }
            if next >= t1 {
                break;
            }
            let j = cfg.video_size_jitter;
            self.frame_weight = if j > 0.0 {
                1.0 + self.rng.random_range(-j..j)
            } else {
                1.0
            };
            self.next_frame += 1.0;
            start = end;
        }
        pieces
    }
}

/// Emit `bytes` as MTU packets at a rate proportional to each piece's
/// weight. A packet leaves when the paced budget reaches its first byte.
fn pace(out: &mut Vec<(MediaKind, u32, f64)>, pieces: &[(f64, f64, f64)], bytes: u64, mtu: u32) {
    let total: f64 = pieces.iter().map(|&(_, len, w)| len * w).sum();
    if total <= 0.0 {
        return;
    }
    let window_end = pieces.last().map_or(0.0, |&(s, len, _)| s + len);
    let scale = bytes as f64 / total;
    let mtu = u64::from(mtu);
    let mut sent = 0u64;
    let mut cum = 0.0;
    for &(start, len, w) in pieces {
        let rate = w * scale;
        let piece_bytes = len * rate;
        while sent < bytes && (sent as f64) < cum + piece_bytes {
            let ts = start + (sent as f64 - cum) / rate;
            let size = (bytes - sent).min(mtu);
            out.push((
                MediaKind::Video,
                size as u32,
                ts.clamp(start, window_end.next_down()),
            ));
            sent += size;
        }
        cum += piece_bytes;
    }
    // rounding can leave the last bytes unassigned
    if sent < bytes {
        out.push((
            MediaKind::Video,
            (bytes - sent) as u32,
            window_end.next_down(),
        ));
    }
}

/// Split `bytes` into MTU-sized packets spread evenly over `[start, start+span)`.
fn push_split(
    out: &mut Vec<(MediaKind, u32, f64)>,
    kind: MediaKind,
    bytes: u64,
    mtu: u32,
    start: f64,
    span: f64,
) {
    let mtu = u64::from(mtu);
    let n = bytes.div_ceil(mtu);
    let gap = span / n as f64;
    let mut left = bytes;
    for i in 0..n {
        let size = left.min(mtu);
        left -= size;
        // stay inside the window despite rounding
        let ts = (start + i as f64 * gap)
            .min((start + span).next_down())
            .max(start);
        out.push((kind, size as u32, ts));
    }
}
