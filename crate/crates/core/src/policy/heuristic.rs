//! Delay- and rate-based rule: grow multiplicatively while the queue is
//! short, back off to a fraction of the measured receiving rate once
//! queuing delay crosses the trigger.

use serde::{Deserialize, Serialize};

use super::{Estimator, MAX_BPS, MIN_BPS};
use crate::features::{MiStats, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    pub initial_bps: f64,
    pub queue_trigger_ms: f64,
    pub increase: f64,
    pub rate_headroom: f64,
    pub decrease: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            initial_bps: 300_000.0,
            queue_trigger_ms: 25.0,
            increase: 1.05,
            rate_headroom: 1.02,
            decrease: 0.85,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeuristicEstimator {
    cfg: HeuristicConfig,
    rate_bps: f64,
}

impl HeuristicEstimator {
    pub fn new(cfg: HeuristicConfig) -> Self {
        Self {
            rate_bps: cfg.initial_bps.clamp(MIN_BPS, MAX_BPS),
            cfg,
        }
    }

    pub fn with_rate(cfg: HeuristicConfig, rate_bps: f64) -> Self {
        Self {
            cfg,
            rate_bps: rate_bps.clamp(MIN_BPS, MAX_BPS),
        }
    }

    pub fn rate_bps(&self) -> f64 {
        self.rate_bps
    }

    /// Apply one MI worth of feedback and return the new estimate.
    pub fn update(&mut self, mi: &MiStats) -> f64 {
        let recv = mi.receiving_rate_bps;
        if recv > 0.0 {
            let next = if mi.queuing_delay_ms > self.cfg.queue_trigger_ms {
                self.cfg.decrease * recv
            } else {
                (self.rate_bps * self.cfg.increase).max(self.cfg.rate_headroom * recv)
            };
            self.rate_bps = next.clamp(MIN_BPS, MAX_BPS);
        }
        self.rate_bps
    }
}

impl Default for HeuristicEstimator {
    fn default() -> Self {
        Self::new(HeuristicConfig::default())
    }
}

impl Estimator for HeuristicEstimator {
    fn estimate(&mut self, obs: &Observation) -> f64 {
        self.update(&obs.latest_short())
    }

    fn name(&self) -> String {
        "heuristic".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mi(recv: f64, q: f64) -> MiStats {
        MiStats {
            receiving_rate_bps: recv,
            queuing_delay_ms: q,
            ..MiStats::default()
        }
    }

    #[test]
    fn increases_on_empty_queue() {
        let mut h = HeuristicEstimator::with_rate(HeuristicConfig::default(), 1e6);
        assert!((h.update(&mi(1e6, 0.0)) - 1.05e6).abs() < 1e-6);
    }

    #[test]
    fn decreases_on_long_queue() {
        let mut h = HeuristicEstimator::with_rate(HeuristicConfig::default(), 1e6);
        assert!((h.update(&mi(1e6, 200.0)) - 850_000.0).abs() < 1e-6);
    }

    #[test]
    fn holds_on_silence() {
        let mut h = HeuristicEstimator::with_rate(HeuristicConfig::default(), 640_000.0);
        assert_eq!(h.update(&mi(0.0, 0.0)), 640_000.0);
    }

    #[test]
    fn reads_latest_short_mi_from_observation() {
        let mut values = vec![0.0; crate::features::OBS_DIM];
        values[crate::features::short_index(1, 0)] = 1e6;
        values[crate::features::short_index(4, 0)] = 200.0;
        let obs = Observation::new(1, values).unwrap();
        let mut h = HeuristicEstimator::default();
        assert!((h.estimate(&obs) - 850_000.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn output_within_action_range(
            start in 1.0f64..1e8, silent in 0.0f64..1.0,
            steps in proptest::collection::vec((0.0f64..2e7, 0.0f64..1000.0), 1..50),
        ) {
            let mut h = HeuristicEstimator::with_rate(HeuristicConfig::default(), start);
            for (r, q) in steps {
                let r = if r < silent * 1e6 { 0.0 } else { r };
                let out = h.update(&mi(r, q));
                prop_assert!((MIN_BPS..=MAX_BPS).contains(&out));
            }
        }
    }
}
