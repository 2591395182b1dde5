//! Log-domain map between the normalized action `[-1, 1]` and bits per
//! second: `bps = exp((a + 1)/2 * ln 800 + ln 0.01) * 1e6`, i.e. 10 kbps at
//! `-1` and 8 Mbps at `+1`.

use log::warn;

use super::PolicyError;

pub const MIN_BPS: f64 = 10_000.0;
pub const MAX_BPS: f64 = 8_000_000.0;

const SPAN: f64 = 800.0;
const FLOOR_MBPS: f64 = 0.01;

/// Action in normalized space, always within `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NormalizedAction(f64);

impl NormalizedAction {
    /// Clamps finite out-of-range values (with a warning); rejects NaN/Inf.
    pub fn new(a: f64) -> Result<Self, PolicyError> {
        if !a.is_finite() {
            return Err(PolicyError::NonFinite(a));
        }
        if !(-1.0..=1.0).contains(&a) {
            warn!("normalized action {a} outside [-1, 1], clamping");
        }
        Ok(Self(a.clamp(-1.0, 1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn to_bps(a: NormalizedAction) -> f64 {
    (((a.0 + 1.0) / 2.0) * SPAN.ln() + FLOOR_MBPS.ln()).exp() * 1e6
}

/// Inverse of [`to_bps`]; rates outside `[10 kbps, 8 Mbps]` clamp to the ends.
pub fn from_bps(bps: f64) -> Result<NormalizedAction, PolicyError> {
    if !bps.is_finite() {
        return Err(PolicyError::NonFinite(bps));
    }
    if bps <= 0.0 {
        return Err(PolicyError::NonPositiveRate(bps));
    }
    let a = 2.0 * ((bps / 1e6).ln() - FLOOR_MBPS.ln()) / SPAN.ln() - 1.0;
    Ok(NormalizedAction(a.clamp(-1.0, 1.0)))
}

/// Convenience for raw values: clamp, then map.
pub fn normalized_to_bps(a: f64) -> Result<f64, PolicyError> {
    NormalizedAction::new(a).map(to_bps)
}
