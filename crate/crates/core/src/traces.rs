//! Ground-truth network traces: piecewise-constant capacity and loss
//! schedules for the five scenario families, plus the text file format.
//!
//! File layout (space separated, `#` starts a comment):
//!
//! ```text
//! family seed
//! duration_ms capacity_bps none
//! duration_ms capacity_bps bernoulli p
//! duration_ms capacity_bps gilbert p_enter mean_burst_len
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::{self, Stream};

pub const MIN_CAPACITY_BPS: f64 = 10_000.0;
pub const MAX_CAPACITY_BPS: f64 = 8_000_000.0;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("unknown trace family `{0}`")]
    UnknownFamily(String),
    #[error("duration must be positive, got {0}")]
    BadDuration(f64),
    #[error("time {t_ms} ms outside trace domain [0, {total_ms})")]
    OutOfRange { t_ms: f64, total_ms: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no segments")]
    NoSegments,
    #[error("invalid family config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-packet loss process of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossModel {
    None,
    Bernoulli {
        p: f64,
    },
    /// Two-state Gilbert model: enter the lossy state with `p_enter` per
    /// packet, stay there for a geometric number of packets with mean
    /// `mean_burst_len`; every packet sent in the lossy state is dropped.
    Gilbert {
        p_enter: f64,
        mean_burst_len: f64,
    },
}

impl LossModel {
    /// Long-run fraction of packets dropped.
    pub fn mean_loss_rate(&self) -> f64 {
        match *self {
            LossModel::None => 0.0,
            LossModel::Bernoulli { p } => p,
            LossModel::Gilbert {
                p_enter,
                mean_burst_len,
            } => {
                let p_exit = 1.0 / mean_burst_len;
                p_enter / (p_enter + p_exit)
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            LossModel::None => true,
            LossModel::Bernoulli { p } => (0.0..=1.0).contains(&p),
            LossModel::Gilbert {
                p_enter,
                mean_burst_len,
            } => (0.0..=1.0).contains(&p_enter) && mean_burst_len >= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid loss parameters {self:?}"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    LowBw,
    HighBw,
    FluctuatingBw,
    BurstLoss,
    FluctuatingBurstLoss,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::LowBw,
        Family::HighBw,
        Family::FluctuatingBw,
        Family::BurstLoss,
        Family::FluctuatingBurstLoss,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::LowBw => "low_bw",
            Family::HighBw => "high_bw",
            Family::FluctuatingBw => "fluctuating_bw",
            Family::BurstLoss => "burst_loss",
            Family::FluctuatingBurstLoss => "fluctuating_burst_loss",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| TraceError::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSegment {
    pub duration_ms: f64,
    pub capacity_bps: f64,
    pub loss: LossModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub family: Family,
    pub seed: u64,
    pub segments: Vec<TraceSegment>,
}

impl Trace {
    pub fn total_duration_ms(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_ms).sum()
    }

    /// Segment index containing `t_ms`; times past the end map to the last
    /// segment and negative times to the first. Used by the link, which may
    /// need to serialize a packet slightly past the trace end.
    pub fn segment_index_clamped(&self, t_ms: f64) -> usize {
        let mut start = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            let end = start + seg.duration_ms;
            if t_ms < end {
                return i;
            }
            start = end;
        }
        self.segments.len() - 1
    }

    /// Start time of every segment, plus the total duration at the end.
    pub fn boundaries_ms(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for seg in &self.segments {
            acc += seg.duration_ms;
            out.push(acc);
        }
        out
    }

    /// Time averages of capacity and long-run loss rate over `[t0, t1)`.
    /// Time past the end counts as the last segment, as on the link.
    pub fn window_mean(&self, t0_ms: f64, t1_ms: f64) -> (f64, f64) {
        let last = self.segments.len() - 1;
        if t1_ms <= t0_ms {
            let s = &self.segments[self.segment_index_clamped(t0_ms)];
            return (s.capacity_bps, s.loss.mean_loss_rate());
        }
        let (mut cap, mut loss) = (0.0, 0.0);
        let mut start = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            let end = if i == last {
                f64::INFINITY
            } else {
                start + seg.duration_ms
            };
            let overlap = end.min(t1_ms) - start.max(t0_ms);
            if overlap > 0.0 {
                cap += seg.capacity_bps * overlap;
                loss += seg.loss.mean_loss_rate() * overlap;
            }
            start = end;
        }
        let span = t1_ms - t0_ms;
        (cap / span, loss / span)
    }

    fn segment_at(&self, t_ms: f64) -> Result<&TraceSegment, TraceError> {
        let total = self.total_duration_ms();
        if !(0.0..total).contains(&t_ms) {
            return Err(TraceError::OutOfRange {
                t_ms,
                total_ms: total,
            });
        }
        Ok(&self.segments[self.segment_index_clamped(t_ms)])
    }

    /// Capacity in force at `t_ms`. Right-continuous at segment boundaries.
    pub fn capacity_at(&self, t_ms: f64) -> Result<f64, TraceError> {
        self.segment_at(t_ms).map(|s| s.capacity_bps)
    }

    pub fn loss_at(&self, t_ms: f64) -> Result<LossModel, TraceError> {
        self.segment_at(t_ms).map(|s| s.loss)
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.segments.is_empty() {
            return Err(TraceError::NoSegments);
        }
        for (i, seg) in self.segments.iter().enumerate() {
            let line = i + 2;
            if !(seg.duration_ms > 0.0 && seg.duration_ms.is_finite()) {
                return Err(TraceError::Parse {
                    line,
                    msg: format!("non-positive duration {}", seg.duration_ms),
                });
            }
            if !(seg.capacity_bps > 0.0 && seg.capacity_bps.is_finite()) {
                return Err(TraceError::Parse {
                    line,
                    msg: format!("non-positive capacity {}", seg.capacity_bps),
                });
            }
            seg.loss
                .validate()
                .map_err(|msg| TraceError::Parse { line, msg })?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.family, self.seed);
        for seg in &self.segments {
            let loss = match seg.loss {
                LossModel::None => "none".to_string(),
                LossModel::Bernoulli { p } => format!("bernoulli {p}"),
                LossModel::Gilbert {
                    p_enter,
                    mean_burst_len,
                } => format!("gilbert {p_enter} {mean_burst_len}"),
            };
            out.push_str(&format!(
                "{} {} {}\n",
                seg.duration_ms, seg.capacity_bps, loss
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut header: Option<(Family, u64)> = None;
        let mut segments = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            let perr = |msg: String| TraceError::Parse { line, msg };
            if header.is_none() {
                if toks.len() != 2 {
                    return Err(perr("expected header `family seed`".into()));
                }
                let fam = toks[0].parse::<Family>().map_err(|e| perr(e.to_string()))?;
                let seed = toks[1]
                    .parse::<u64>()
                    .map_err(|e| perr(format!("bad seed: {e}")))?;
                header = Some((fam, seed));
                continue;
            }
            let num = |i: usize, what: &str| -> Result<f64, TraceError> {
                let tok = toks.get(i).ok_or_else(|| perr(format!("missing {what}")))?;
                let v = tok
                    .parse::<f64>()
                    .map_err(|e| perr(format!("bad {what} `{tok}`: {e}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(perr(format!("non-finite {what}")))
                }
            };
            let duration_ms = num(0, "duration_ms")?;
            let capacity_bps = num(1, "capacity_bps")?;
            if duration_ms <= 0.0 {
                return Err(perr(format!("non-positive duration {duration_ms}")));
            }
            if capacity_bps <= 0.0 {
                return Err(perr(format!("non-positive capacity {capacity_bps}")));
            }
            let kind = toks.get(2).copied().unwrap_or("none");
            let (loss, n_params) = match kind {
                "none" => (LossModel::None, 0),
                "bernoulli" => (LossModel::Bernoulli { p: num(3, "p")? }, 1),
                "gilbert" => (
                    LossModel::Gilbert {
                        p_enter: num(3, "p_enter")?,
                        mean_burst_len: num(4, "mean_burst_len")?,
                    },
                    2,
                ),
                other => return Err(perr(format!("unknown loss kind `{other}`"))),
            };
            if toks.len() > 3 + n_params {
                return Err(perr("trailing tokens".into()));
            }
            loss.validate().map_err(perr)?;
            segments.push(TraceSegment {
                duration_ms,
                capacity_bps,
                loss,
            });
        }
        let (family, seed) = header.ok_or(TraceError::NoSegments)?;
        if segments.is_empty() {
            return Err(TraceError::NoSegments);
        }
        Ok(Trace {
            family,
            seed,
            segments,
        })
    }
}

pub fn write_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    trace.validate()?;
    std::fs::write(path, trace.to_text())?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    Trace::parse(&std::fs::read_to_string(path)?)
}

/// Closed interval `[lo, hi]` sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Generator calibration for every family and the default suite partition.
/// The shipped `configs/families.toml` mirrors [`FamilyConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub low_bw_capacity_bps: Range,
    pub high_bw_capacity_bps: Range,
    pub fluctuating_segment_ms: Range,
    pub fluctuating_capacity_bps: Range,
    pub burst_capacity_bps: Range,
    pub burst_p_enter: Range,
    pub burst_mean_len: Range,
    /// Capacities outside this range are rejected by the generator.
    pub policy_range_bps: Range,
    pub suite: SuitePartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuitePartition {
    pub low_bw: usize,
    pub high_bw: usize,
    pub fluctuating_bw: usize,
    pub burst_loss: usize,
    pub fluctuating_burst_loss: usize,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            low_bw_capacity_bps: Range::new(100e3, 500e3),
            high_bw_capacity_bps: Range::new(2e6, 6e6),
            fluctuating_segment_ms: Range::new(5_000.0, 20_000.0),
            fluctuating_capacity_bps: Range::new(200e3, 4e6),
            burst_capacity_bps: Range::new(1e6, 3e6),
            burst_p_enter: Range::new(0.01, 0.05),
            burst_mean_len: Range::new(2.0, 5.0),
            policy_range_bps: Range::new(MIN_CAPACITY_BPS, MAX_CAPACITY_BPS),
            suite: SuitePartition {
                low_bw: 4,
                high_bw: 4,
                fluctuating_bw: 4,
                burst_loss: 2,
                fluctuating_burst_loss: 2,
            },
        }
    }
}

impl FamilyConfig {
    pub fn from_toml(text: &str) -> Result<Self, TraceError> {
        let cfg: FamilyConfig =
            toml::from_str(text).map_err(|e| TraceError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<(), TraceError> {
        let ranges = [
            ("low_bw_capacity_bps", self.low_bw_capacity_bps),
            ("high_bw_capacity_bps", self.high_bw_capacity_bps),
            ("fluctuating_segment_ms", self.fluctuating_segment_ms),
            ("fluctuating_capacity_bps", self.fluctuating_capacity_bps),
            ("burst_capacity_bps", self.burst_capacity_bps),
            ("burst_p_enter", self.burst_p_enter),
            ("burst_mean_len", self.burst_mean_len),
            ("policy_range_bps", self.policy_range_bps),
        ];
        for (name, r) in ranges {
            if !(r.lo > 0.0 && r.hi >= r.lo && r.hi.is_finite()) {
                return Err(TraceError::Config(format!("{name}: bad range {r:?}")));
            }
        }
        if self.burst_p_enter.hi > 1.0 || self.burst_mean_len.lo < 1.0 {
            return Err(TraceError::Config(
                "burst loss parameters out of bounds".into(),
            ));
        }
        Ok(())
    }

    fn capacity<R: Rng>(&self, range: Range, rng: &mut R) -> f64 {
        range
            .sample(rng)
            .clamp(self.policy_range_bps.lo, self.policy_range_bps.hi)
    }

    fn gilbert<R: Rng>(&self, rng: &mut R) -> LossModel {
        LossModel::Gilbert {
            p_enter: self.burst_p_enter.sample(rng),
            mean_burst_len: self.burst_mean_len.sample(rng),
        }
    }

    fn fluctuating<R: Rng>(
        &self,
        duration_ms: f64,
        bursty: bool,
        rng: &mut R,
    ) -> Vec<TraceSegment> {
        let mut segments = Vec::new();
        let mut total = 0.0;
        while total < duration_ms {
            let seg_ms = self.fluctuating_segment_ms.sample(rng).round().max(1.0);
            let capacity_bps = self.capacity(self.fluctuating_capacity_bps, rng).round();
            let loss = if bursty {
                self.gilbert(rng)
            } else {
                LossModel::None
            };
            segments.push(TraceSegment {
                duration_ms: seg_ms,
                capacity_bps,
                loss,
            });
            total += seg_ms;
        }
        segments
    }

    pub fn generate(
        &self,
        family: Family,
        seed: u64,
        duration_ms: f64,
    ) -> Result<Trace, TraceError> {
        if !(duration_ms > 0.0 && duration_ms.is_finite()) {
            return Err(TraceError::BadDuration(duration_ms));
        }
        let mut rng = seeds::substream(seed, Stream::TraceGen);
        let single = |capacity_bps: f64, loss: LossModel| {
            vec![TraceSegment {
                duration_ms,
                capacity_bps,
                loss,
            }]
        };
        let segments = match family {
            Family::LowBw => single(
                self.capacity(self.low_bw_capacity_bps, &mut rng).round(),
                LossModel::None,
            ),
            Family::HighBw => single(
                self.capacity(self.high_bw_capacity_bps, &mut rng).round(),
                LossModel::None,
            ),
            Family::FluctuatingBw => self.fluctuating(duration_ms, false, &mut rng),
            Family::BurstLoss => {
                let cap = self.capacity(self.burst_capacity_bps, &mut rng).round();
                let loss = self.gilbert(&mut rng);
                single(cap, loss)
            }
            Family::FluctuatingBurstLoss => self.fluctuating(duration_ms, true, &mut rng),
        };
        Ok(Trace {
            family,
            seed,
            segments,
        })
    }

    /// The evaluation suite: `suite.<family>` scenarios per family, with
    /// trace seeds derived from `base_seed`.
    pub fn suite(&self, base_seed: u64) -> Vec<Scenario> {
        let counts = [
            (Family::LowBw, self.suite.low_bw),
            (Family::HighBw, self.suite.high_bw),
            (Family::FluctuatingBw, self.suite.fluctuating_bw),
            (Family::BurstLoss, self.suite.burst_loss),
            (
                Family::FluctuatingBurstLoss,
                self.suite.fluctuating_burst_loss,
            ),
        ];
        let mut out = Vec::new();
        for (family, n) in counts {
            for k in 0..n {
                let seed = seeds::derive_seed(base_seed, out.len() as u64);
                out.push(Scenario {
                    name: format!("{family}_{k}"),
                    family,
                    seed,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub family: Family,
    pub seed: u64,
}

/// [`FamilyConfig::generate`] with the default calibration.
pub fn generate(family: Family, seed: u64, duration_ms: f64) -> Result<Trace, TraceError> {
    FamilyConfig::default().generate(family, seed, duration_ms)
}

/// A single-segment trace, handy for tests and constant-capacity runs.
pub fn fixed(capacity_bps: f64, loss: LossModel, duration_ms: f64) -> Trace {
    Trace {
        family: if matches!(loss, LossModel::None) {
            Family::HighBw
        } else {
            Family::BurstLoss
        },
        seed: 0,
        segments: vec![TraceSegment {
            duration_ms,
            capacity_bps,
            loss,
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window_mean_straddles_segments() {
        let t = Trace {
            family: Family::FluctuatingBw,
            seed: 0,
            segments: vec![
                TraceSegment {
                    duration_ms: 100.0,
                    capacity_bps: 1e6,
                    loss: LossModel::None,
                },
                TraceSegment {
                    duration_ms: 100.0,
                    capacity_bps: 3e6,
                    loss: LossModel::Bernoulli { p: 0.1 },
                },
            ],
        };
        let (c, l) = t.window_mean(70.0, 130.0);
        assert!((c - 2e6).abs() < 1e-6);
        assert!((l - 0.05).abs() < 1e-12);
        assert_eq!(t.window_mean(50.0, 50.0).0, 1e6);
        // the last segment extends past the trace end
        assert_eq!(t.window_mean(190.0, 400.0).0, 3e6);
    }

    #[test]
    fn low_bw_is_single_lossless_segment() {
        let t = generate(Family::LowBw, 3, 120_000.0).unwrap();
        assert_eq!(t.segments.len(), 1);
        assert_eq!(t.segments[0].loss.mean_loss_rate(), 0.0);
    }

    #[test]
    fn fluctuating_has_at_least_six_segments() {
        let t = generate(Family::FluctuatingBw, 11, 120_000.0).unwrap();
        assert!(t.segments.len() >= 6);
    }

    #[test]
    fn generation_is_deterministic() {
        for fam in Family::ALL {
            assert_eq!(
                generate(fam, 5, 60_000.0).unwrap(),
                generate(fam, 5, 60_000.0).unwrap()
            );
        }
    }

    #[test]
    fn unknown_family_rejected() {
        assert!(matches!(
            "wifi".parse::<Family>(),
            Err(TraceError::UnknownFamily(_))
        ));
    }

    #[test]
    fn capacity_lookup_right_continuous() {
        let t = Trace {
            family: Family::FluctuatingBw,
            seed: 0,
            segments: vec![
                TraceSegment {
                    duration_ms: 10_000.0,
                    capacity_bps: 1e6,
                    loss: LossModel::None,
                },
                TraceSegment {
                    duration_ms: 10_000.0,
                    capacity_bps: 2e6,
                    loss: LossModel::None,
                },
            ],
        };
        assert_eq!(t.capacity_at(0.0).unwrap(), 1e6);
        assert_eq!(t.capacity_at(9_999.999).unwrap(), 1e6);
        assert_eq!(t.capacity_at(10_000.0).unwrap(), 2e6);
        assert!(matches!(
            t.capacity_at(20_000.0),
            Err(TraceError::OutOfRange { .. })
        ));
        assert!(t.capacity_at(-1.0).is_err());
    }

    #[test]
    fn parse_rejects_zero_capacity_with_line_number() {
        let err = Trace::parse("low_bw 1\n# comment\n1000 0 none\n").unwrap_err();
        match err {
            TraceError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn parse_rejects_empty() {
        assert!(matches!(Trace::parse(""), Err(TraceError::NoSegments)));
        assert!(matches!(
            Trace::parse("low_bw 1\n"),
            Err(TraceError::NoSegments)
        ));
    }

    #[test]
    fn parse_accepts_comments_and_all_loss_kinds() {
        let t = Trace::parse(
            "burst_loss 9 # header\n500 1e6 none\n500 2e6 bernoulli 0.1\n 500 3e6 gilbert 0.02 3 # x\n",
        )
        .unwrap();
        assert_eq!(t.segments.len(), 3);
        assert_eq!(t.segments[1].loss, LossModel::Bernoulli { p: 0.1 });
        assert_eq!(
            t.segments[2].loss.mean_loss_rate(),
            0.02 / (0.02 + 1.0 / 3.0)
        );
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        for fam in Family::ALL {
            let t = generate(fam, 77, 120_000.0).unwrap();
            let p = dir.path().join(format!("{fam}.trace"));
            write_trace(&t, &p).unwrap();
            assert_eq!(read_trace(&p).unwrap(), t);
        }
    }

    #[test]
    fn shipped_config_matches_default() {
        let text = include_str!("../../../configs/families.toml");
        assert_eq!(
            FamilyConfig::from_toml(text).unwrap(),
            FamilyConfig::default()
        );
    }

    #[test]
    fn default_suite_has_sixteen_scenarios() {
        let suite = FamilyConfig::default().suite(1);
        assert_eq!(suite.len(), 16);
        for fam in Family::ALL {
            assert!(suite.iter().any(|s| s.family == fam));
        }
    }

    fn check_family(cfg: &FamilyConfig, t: &Trace, duration_ms: f64) {
        assert!(t.total_duration_ms() >= duration_ms);
        for s in &t.segments {
            assert!(cfg.policy_range_bps.contains(s.capacity_bps));
        }
        match t.family {
            Family::LowBw | Family::HighBw => {
                assert_eq!(t.segments.len(), 1);
                assert_eq!(t.segments[0].loss, LossModel::None);
                let r = if t.family == Family::LowBw {
                    cfg.low_bw_capacity_bps
                } else {
                    cfg.high_bw_capacity_bps
                };
                assert!(r.contains(t.segments[0].capacity_bps));
            }
            Family::FluctuatingBw | Family::FluctuatingBurstLoss => {
                for s in &t.segments {
                    assert!(cfg.fluctuating_segment_ms.contains(s.duration_ms));
                    assert!(cfg.fluctuating_capacity_bps.contains(s.capacity_bps));
                    match s.loss {
                        LossModel::None => assert_eq!(t.family, Family::FluctuatingBw),
                        LossModel::Gilbert {
                            p_enter,
                            mean_burst_len,
                        } => {
                            assert_eq!(t.family, Family::FluctuatingBurstLoss);
                            assert!(cfg.burst_p_enter.contains(p_enter));
                            assert!(cfg.burst_mean_len.contains(mean_burst_len));
                        }
                        LossModel::Bernoulli { .. } => panic!("unexpected bernoulli"),
                    }
                }
            }
            Family::BurstLoss => {
                assert_eq!(t.segments.len(), 1);
                assert!(cfg.burst_capacity_bps.contains(t.segments[0].capacity_bps));
                assert!(matches!(t.segments[0].loss, LossModel::Gilbert { .. }));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn family_postconditions(seed in any::<u64>(), fam_idx in 0usize..5) {
            let cfg = FamilyConfig::default();
            let fam = Family::ALL[fam_idx];
            let t = cfg.generate(fam, seed, 120_000.0).unwrap();
            check_family(&cfg, &t, 120_000.0);
        }
    }
}
