//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, stream, replica, index, lane)`,
//! so a single innovation can be read, replaced or re-read in any order and
//! from any thread without disturbing the others. The mixing function is the
//! SplitMix64 finalizer applied twice over the packed key.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const LANE_MUL: u64 = 0xD1B5_4A32_D192_ED03;
const STREAM_MUL: u64 = 0xC2B2_AE3D_27D4_EB4F;

/// Well-known stream identifiers.
pub mod streams {
    /// Base innovation sequence ε.
    pub const INNOVATION: u64 = 1;
    /// Independent copy ε*.
    pub const STAR: u64 = 2;
    /// Scenery η of the random walk in random scenery.
    pub const SCENERY: u64 = 3;
    /// Bootstrap resampling indices.
    pub const BOOTSTRAP: u64 = 4;
    /// Multinomial resampling of contingency tables.
    pub const TABLE_BOOTSTRAP: u64 = 5;
    /// Null (product-of-marginals) resampling of contingency tables.
    pub const TABLE_NULL: u64 = 6;
    /// Transport subsampling and dual probes.
    pub const TRANSPORT: u64 = 7;
    /// Greedy search restarts.
    pub const SEARCH: u64 = 8;
}

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A keyed position in the counter space: one replica of one stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(seed: u64, stream: u64, replica: u64) -> Self {
        let k = mix64(seed.wrapping_add(GOLDEN));
        let k = mix64(k ^ stream.wrapping_mul(STREAM_MUL));
        let k = mix64(k.wrapping_add(GOLDEN) ^ replica);
        StreamKey(k)
    }

    #[inline]
    pub fn bits(&self, index: i64, lane: u32) -> u64 {
        let counter = (index as u64).wrapping_mul(GOLDEN) ^ (lane as u64).wrapping_mul(LANE_MUL);
        mix64(self.0 ^ mix64(counter))
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, index: i64, lane: u32) -> f64 {
        ((self.bits(index, lane) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound`.
    #[inline]
    pub fn below(&self, index: i64, lane: u32, bound: usize) -> usize {
        ((self.bits(index, lane) as u128 * bound as u128) >> 64) as usize
    }

    /// A sequential generator seeded from this key, for algorithms that consume
    /// a variable number of draws (binomial sampling, random restarts).
    pub fn sequential(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix64(self.0 ^ GOLDEN))
    }
}
