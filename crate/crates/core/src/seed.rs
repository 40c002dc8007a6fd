//! Counter-based seed derivation.
//!
//! Every random object in the crate (key segments, trial streams, password
//! draws) is addressed by a `(parent, index)` pair, so any single segment or
//! trial can be regenerated in isolation without replaying its neighbours.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const INDEX_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// The SplitMix64 output finaliser: a bijection on `u64` with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed number `index` of `parent`.
#[inline]
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index ^ INDEX_SALT))
}

/// A SplitMix64 stream. Cheap to create, which is what per-segment
/// generation needs; not suitable where statistical quality across very long
/// streams matters (use ChaCha there).
#[derive(Debug, Clone)]
pub struct SegmentStream {
    state: u64,
}

impl SegmentStream {
    #[inline]
    pub fn new(seed: u64) -> Self {
        SegmentStream { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform 53-bit integer in `[0, 2^53)`.
    #[inline]
    pub fn next_u53(&mut self) -> u64 {
        self.next_u64() >> 11
    }
}
