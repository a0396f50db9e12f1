//! Seeded randomness.
//!
//! Every stream is a ChaCha20 generator (`rand_chacha::ChaCha20Rng`), whose
//! output is fixed by its seed and stream id on every platform. A
//! [`SeededRng`] hands out independent substreams keyed by a purpose tag, so
//! the draws used for, say, edge dropout never shift when weight
//! initialisation consumes a different number of values.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::real::Real;

/// Root of all randomness for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededRng {
    seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for `tag`.
    pub fn substream(&self, tag: &str) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(fnv1a64(tag.as_bytes()));
        rng
    }

    /// Independent generator for `(tag, index)`, e.g. one per user.
    pub fn indexed_substream(&self, tag: &str, index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(mix64(self.seed ^ mix64(index.wrapping_add(1))));
        rng.set_stream(fnv1a64(tag.as_bytes()));
        rng
    }

    /// Derives a child root, e.g. for a sweep member.
    pub fn child(&self, tag: &str) -> SeededRng {
        SeededRng::new(mix64(self.seed ^ fnv1a64(tag.as_bytes())))
    }
}

/// 64-bit FNV-1a hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn standard_normal<T: Real>(rng: &mut impl RngCore) -> T {
    let v: f64 = StandardNormal.sample(rng);
    T::lit(v)
}

pub fn uniform<T: Real>(rng: &mut impl RngCore, lo: f64, hi: f64) -> T {
    T::lit(rng.random_range(lo..hi))
}

pub fn bernoulli(rng: &mut impl RngCore, p: f64) -> bool {
    // Exact at the boundaries; `random_bool` rejects p outside [0, 1].
    if p <= 0.0 {
        return false;
    }
    if p >= 1.0 {
        return true;
    }
    rng.random_bool(p)
}
