//! SplitMix64, the generator behind every seeded step in this crate.
//!
//! Permutations, subsamples, synthetic streams and random-removal choices all
//! draw from this generator so that a seed reproduces the same run on every
//! platform and in any other implementation that follows these definitions.
//!
//! Step function (all arithmetic wrapping modulo 2^64):
//!
//! ```text
//! state = state + 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! output z ^ (z >> 31)
//! ```
//!
//! The initial state is the seed itself. Derived quantities:
//!
//! - `below(n)`: let `limit = (2^64 - 1) - ((2^64 - 1) % n)`; draw outputs
//!   until one `r < limit`, return `r % n`.
//! - `next_f64()`: `(next_u64() >> 11) * 2^-53`, uniform on `[0, 1)`.
//! - `shuffle(xs)`: Fisher-Yates from the back: for `i = len-1 down to 1`,
//!   `j = below(i + 1)`, swap `xs[i]` and `xs[j]`.
//! - `SplitMix64::substream(seed, k)`: a generator whose initial state is the
//!   first output of `SplitMix64::new(seed ^ (k * 0xD1B54A32D192ED03))`.

use rand_core::{impls, RngCore};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_2: u64 = 0x94D0_49BB_1331_11EB;
const STREAM_MULT: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// An independent generator for purpose `k` under the same user seed.
    pub fn substream(seed: u64, k: u64) -> Self {
        let mut g = Self::new(seed ^ k.wrapping_mul(STREAM_MULT));
        Self::new(g.next())
    }

    #[inline]
    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(MIX_1);
        z = (z ^ (z >> 27)).wrapping_mul(MIX_2);
        z ^ (z >> 31)
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let limit = u64::MAX - (u64::MAX % n);
        loop {
            let r = self.next();
            if r < limit {
                return r % n;
            }
        }
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}

impl RngCore for SplitMix64 {
    fn next_u32(&mut self) -> u32 {
        (self.next() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
