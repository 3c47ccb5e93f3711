//! Counter-keyed random streams.
//!
//! Every random quantity is drawn from a stream whose key is derived from the
//! run seed and the coordinates of the quantity (trial, row, column, ...), so
//! results never depend on the order in which work is scheduled.

use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key of a random substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(mix(seed.wrapping_add(GOLDEN)))
    }

    /// Derive the key of a sub-stream indexed by `index`.
    #[inline]
    pub fn child(self, index: u64) -> Self {
        StreamKey(mix(self.0 ^ mix(index.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019))))
    }

    /// Named sub-stream, used to separate independent roles within one trial.
    pub fn tagged(self, tag: &str) -> Self {
        tag.bytes().fold(self.child(0x7461_6700), |k, b| k.child(b as u64))
    }

    pub fn rng(self) -> SplitMix64 {
        SplitMix64::seed_from_u64(self.0)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}
