//! Seedable, portable random numbers.
//!
//! Seeds are expanded with SplitMix64 into the xoshiro256++ state, so a given
//! `u64` seed yields the same stream on every platform.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Identifier written to output metadata.
pub const RNG_ALGORITHM: &str = "xoshiro256++/splitmix64";

pub type Rng = Xoshiro256PlusPlus;

pub fn from_seed(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Uniform in `[0, 1)` from the top 53 bits.
#[inline]
pub fn uniform01(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = from_seed(7);
        let mut b = from_seed(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn known_first_output() {
        // splitmix64(0) expansion followed by one xoshiro256++ step
        let mut r = from_seed(0);
        let first = r.next_u64();
        let mut again = from_seed(0);
        assert_eq!(first, again.next_u64());
        assert_ne!(first, from_seed(1).next_u64());
    }

    #[test]
    fn uniform_in_range() {
        let mut r = from_seed(3);
        let mut mean = 0.0;
        for _ in 0..10_000 {
            let u = uniform01(&mut r);
            assert!((0.0..1.0).contains(&u));
            mean += u;
        }
        assert!((mean / 10_000.0 - 0.5).abs() < 0.02);
    }
}
