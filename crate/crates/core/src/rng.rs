//! Reproducible random streams.
//!
//! Every randomized routine draws from xoshiro256** generators. Stream `i`
//! of master seed `s` is seeded as
//!
//! ```text
//!     z = s + (i + 1) * 0x9E3779B97F4A7C15      (wrapping)
//!     stream_seed(s, i) = splitmix64_mix(z)
//!     state = xoshiro256**::seed_from_u64(stream_seed(s, i))
//! ```
//!
//! where `seed_from_u64` expands the 64-bit seed into the 256-bit state with
//! SplitMix64. Uniform reals are `(x >> 11) * 2^-53`; bounded integers use
//! Lemire's multiply-shift with rejection. Trials are always mapped to
//! streams by index, so results do not depend on how work is split across
//! threads.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub type StreamRng = Xoshiro256StarStar;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(master: u64, index: u64) -> u64 {
    splitmix64_mix(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Generator for stream `index` of `master`.
pub fn stream(master: u64, index: u64) -> StreamRng {
    Xoshiro256StarStar::seed_from_u64(stream_seed(master, index))
}

/// Uniform draw from `[0, 1)` with 53 random bits.
pub fn unit_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw from `0..bound`.
///
/// # Panics
/// If `bound == 0`.
pub fn uniform_index<R: RngCore>(rng: &mut R, bound: usize) -> usize {
    assert!(bound > 0, "empty range");
    let s = bound as u64;
    let mut m = (rng.next_u64() as u128) * (s as u128);
    let mut low = m as u64;
    if low < s {
        let threshold = s.wrapping_neg() % s;
        while low < threshold {
            m = (rng.next_u64() as u128) * (s as u128);
            low = m as u64;
        }
    }
    (m >> 64) as usize
}
