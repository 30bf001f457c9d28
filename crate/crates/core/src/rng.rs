//! Named random sub-streams derived from a single experiment seed.
//!
//! Every stochastic component (data shuffling, dropout, random chunk sizes,
//! parameter initialization) draws from its own stream so that changing how
//! one component consumes randomness never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    seed: u64,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream identified by `name` alone.
    pub fn stream(&self, name: &str) -> Rng {
        self.indexed(name, 0)
    }

    /// Stream identified by `name` and an index (epoch, step, sentence...).
    pub fn indexed(&self, name: &str, index: u64) -> Rng {
        Rng::seed_from_u64(mix(self.seed, fnv1a(name.as_bytes()), index))
    }

    /// Stream identified by `name` and two indices.
    pub fn indexed2(&self, name: &str, a: u64, b: u64) -> Rng {
        Rng::seed_from_u64(mix(mix(self.seed, fnv1a(name.as_bytes()), a), 0x9e37_79b9, b))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

// splitmix64 finalizer over the combined words
fn mix(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a
        .wrapping_add(b.rotate_left(17))
        .wrapping_add(c.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
