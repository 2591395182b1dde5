//! Seed derivation.
//!
//! A master seed is expanded into independent ChaCha8 generators by stream
//! id: `ChaCha8Rng::seed_from_u64(master)` followed by `set_stream(id)`.
//! Stream ids are fixed per purpose (see [`Stream`]) so adding a consumer
//! never shifts the numbers another consumer sees.
//!
//! Per-call and per-scenario seeds are derived with [`derive_seed`], a
//! SplitMix64 mix of `(parent, index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Loss = 1,
    VideoJitter = 2,
    PolicyNoise = 3,
    TraceGen = 4,
    Minibatch = 5,
    Init = 6,
    Bootstrap = 7,
}

pub fn substream(master: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream as u64);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index.wrapping_add(1)))
}
