//! Seeded, splittable random streams.
//!
//! Every stochastic component draws from a [`RandomStream`] identified by a
//! master seed and a stream id. Child streams are derived by mixing a label
//! into the id, so that e.g. the shadowing draws of drop 17 do not change
//! when the UE generator consumes a different number of samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Named purposes for child streams of a single drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    Layout = 1,
    Attractors = 2,
    Ues = 3,
    Beta = 4,
    Shadowing = 5,
    LineOfSight = 6,
    Integration = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Child stream for the `index`-th item (drop, node, ...) of this stream.
    pub fn child(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(index.wrapping_add(0x5bd1_e995))),
        }
    }

    pub fn sub(&self, which: Substream) -> Self {
        self.child(0xa076_1d64_78bd_642f ^ which as u64)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_streams_identical_samples() {
        let a: Vec<u64> = RandomStream::with_stream(7, 3).rng().random_iter().take(16).collect();
        let b: Vec<u64> = RandomStream::with_stream(7, 3).rng().random_iter().take(16).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn children_differ() {
        let root = RandomStream::new(7);
        let a: u64 = root.child(0).rng().random();
        let b: u64 = root.child(1).rng().random();
        let c: u64 = root.sub(Substream::Ues).rng().random();
        let d: u64 = root.sub(Substream::Beta).rng().random();
        assert_ne!(a, b);
        assert_ne!(c, d);
    }
}
