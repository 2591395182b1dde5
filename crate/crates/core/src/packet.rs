use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Audio,
    Video,
    Probe,
}

/// One packet of a call leg. `recv_ts_ms` is `None` while in flight and for
/// packets the link dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub seq: u64,
    pub kind: MediaKind,
    pub size_bytes: u32,
    pub send_ts_ms: f64,
    pub recv_ts_ms: Option<f64>,
}

impl Packet {
    pub fn new(seq: u64, kind: MediaKind, size_bytes: u32, send_ts_ms: f64) -> Self {
        Self {
            seq,
            kind,
            size_bytes,
            send_ts_ms,
            recv_ts_ms: None,
        }
    }

    pub fn bits(&self) -> f64 {
        f64::from(self.size_bytes) * 8.0
    }

    /// One-way delay, receiver clock minus sender clock.
    pub fn delay_ms(&self) -> Option<f64> {
        self.recv_ts_ms.map(|r| r - self.send_ts_ms)
    }
}
