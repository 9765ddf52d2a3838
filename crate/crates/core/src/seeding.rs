//! Stable seed derivation.
//!
//! Every random stream in a run or sweep descends from one master seed. A
//! child seed is derived by folding a sequence of 64-bit labels into the
//! parent with the SplitMix64 finalizer:
//!
//! ```text
//! h0 = splitmix64(parent)
//! h_{i+1} = splitmix64(h_i ^ splitmix64(label_i + 0x9E3779B97F4A7C15))
//! ```
//!
//! Labels are either small stream tags (see [`Stream`]) or FNV-1a hashes of a
//! canonical text rendering of a sweep cell, so adding cells to a grid never
//! changes the seeds of existing cells.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere in the simulator.
pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(parent), |h, &label| {
        splitmix64(h ^ splitmix64(label.wrapping_add(GOLDEN_GAMMA)))
    })
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Named sub-streams of a single experiment cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Graph = 1,
    Sources = 2,
    Payloads = 3,
    Simulation = 4,
    Query = 5,
    Update = 6,
}

impl Stream {
    pub fn seed(self, parent: u64, extra: &[u64]) -> u64 {
        let mut labels = Vec::with_capacity(extra.len() + 1);
        labels.push(self as u64);
        labels.extend_from_slice(extra);
        derive_seed(parent, &labels)
    }

    pub fn rng(self, parent: u64, extra: &[u64]) -> SimRng {
        rng_from(self.seed(parent, extra))
    }
}
