//! Seed handling for reproducible Monte-Carlo runs.
//!
//! Every random draw in the crate flows from a [`RandomSeed`]. Independent
//! sub-streams (one per trial, per link, per grid cell) are obtained with
//! [`RandomSeed::derive`], which hashes the parent seed together with a label.
//! Sub-streams therefore depend only on their labels, never on the order in
//! which workers happen to evaluate them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RandomSeed(pub u64);

impl RandomSeed {
    pub const fn new(seed: u64) -> Self {
        Self(seed)
    }

    /// Child seed for the sub-stream identified by `label`.
    pub fn derive(self, label: u64) -> Self {
        let a = splitmix64(self.0 ^ 0x6a09_e667_f3bc_c908);
        Self(splitmix64(
            a.wrapping_add(label.wrapping_mul(0x9e37_79b9_7f4a_7c15)),
        ))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for RandomSeed {
    fn from(seed: u64) -> Self {
        Self(seed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
