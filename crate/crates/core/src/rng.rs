//! Reproducible random streams.
//!
//! A stream is identified by `(master seed, stream index)`. Each stream owns
//! one ChaCha8 key per label, derived from the master seed and the label by
//! splitmix64 expansion of an FNV-1a hash, and uses the stream index as the
//! ChaCha stream word. Distinct indices therefore select disjoint keystreams
//! of the same cipher key, and the same `(seed, index, label)` always
//! reproduces the same bytes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub index: u64,
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }

    /// Generator driving the base path (Gaussian increments and thinning).
    pub fn rng(&self) -> SimRng {
        self.substream("path")
    }

    /// Independent generator for an auxiliary consumer (Meyer clocks,
    /// bridge tests, ...). Drawing from it never perturbs [`Self::rng`].
    pub fn substream(&self, label: &str) -> SimRng {
        let mut rng = ChaCha8Rng::from_seed(derive_key(self.seed, label));
        rng.set_stream(self.index);
        rng
    }
}

fn derive_key(seed: u64, label: &str) -> [u8; 32] {
    let mut state = seed ^ fnv1a64(label.as_bytes());
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
