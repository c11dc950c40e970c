//! SplitMix64 generator plus the hashing used to derive per-item seeds.
//!
//! Everything here is pure integer arithmetic so that streams are identical
//! across platforms and builds.

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 state. `Copy` so a state can be snapshotted and replayed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub const fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub const fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Unbiased integer in `[0, n)` by rejection of the top partial block.
    pub fn uniform(&mut self, n: u64) -> Result<u64> {
        if n == 0 {
            return Err(Error::Domain("uniform draw over an empty range (n = 0)".into()));
        }
        Ok(self.uniform_nonzero(n))
    }

    pub(crate) fn uniform_nonzero(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Accept u < floor(2^64 / n) * n = 2^64 - (2^64 mod n).
        let rem = (u64::MAX % n + 1) % n;
        if rem == 0 {
            return self.next_u64() % n;
        }
        let limit = rem.wrapping_neg();
        loop {
            let u = self.next_u64();
            if u < limit {
                return u % n;
            }
        }
    }

    pub(crate) fn uniform_usize(&mut self, n: usize) -> usize {
        self.uniform_nonzero(n as u64) as usize
    }

    /// Uniform real in the open interval (0, 1) on a grid of 2^53 points.
    pub fn open01(&mut self) -> f64 {
        const GRID: u64 = 1 << 53;
        (self.uniform_nonzero(GRID) as f64 + 0.5) / GRID as f64
    }

    /// Standard normal deviate via Box-Muller (cosine branch only).
    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.open01();
        let u2 = self.open01();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Seed for one utterance: FNV-1a of the id, xor the global seed, then one
/// SplitMix64 output step. Independent of processing order.
pub fn derive_utterance_seed(global_seed: u64, utterance_id: &str) -> u64 {
    SplitMix64::new(fnv1a64(utterance_id.as_bytes()) ^ global_seed).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_zero_first_output() {
        assert_eq!(SplitMix64::new(0).next_u64(), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn seed_one_differs() {
        let a = SplitMix64::new(0).next_u64();
        let b = SplitMix64::new(1).next_u64();
        assert_eq!(b, 0x910A_2DEC_8902_5CC1);
        assert_ne!(a, b);
    }

    #[test]
    fn same_state_same_output() {
        let rng = SplitMix64::new(12345);
        let (mut a, mut b) = (rng, rng);
        assert_eq!(a.next_u64(), b.next_u64());
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_zero_is_error() {
        assert!(matches!(SplitMix64::new(1).uniform(0), Err(Error::Domain(_))));
    }

    #[test]
    fn uniform_one_is_always_zero() {
        let mut rng = SplitMix64::new(99);
        assert!((0..1000).all(|_| rng.uniform(1).unwrap() == 0));
    }

    #[test]
    fn power_of_two_needs_no_rejection() {
        let mut a = SplitMix64::new(7);
        let mut b = SplitMix64::new(7);
        for _ in 0..1000 {
            assert_eq!(a.uniform(8).unwrap(), b.next_u64() % 8);
        }
    }

    #[test]
    fn rejection_bound_matches_wide_arithmetic() {
        for n in [1u64, 2, 3, 6, 7, 1 << 40, (1 << 63) + 1, u64::MAX] {
            let wide = (u128::from(u64::MAX) + 1) / u128::from(n) * u128::from(n);
            let rem = (u64::MAX % n + 1) % n;
            let narrow = if rem == 0 {
                1u128 << 64
            } else {
                u128::from(rem.wrapping_neg())
            };
            assert_eq!(wide, narrow, "n = {n}");
        }
    }

    #[test]
    fn uniform_six_frequencies() {
        let mut rng = SplitMix64::new(2024);
        let mut counts = [0u32; 6];
        for _ in 0..600_000 {
            counts[rng.uniform(6).unwrap() as usize] += 1;
        }
        for c in counts {
            let rel = (f64::from(c) - 100_000.0).abs() / 100_000.0;
            assert!(rel < 0.01, "count {c}");
        }
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn utterance_seed_is_stable() {
        assert_eq!(derive_utterance_seed(42, "utt-1"), derive_utterance_seed(42, "utt-1"));
        assert_ne!(derive_utterance_seed(42, "utt-1"), derive_utterance_seed(42, "utt-2"));
        assert_ne!(derive_utterance_seed(42, "utt-1"), derive_utterance_seed(43, "utt-1"));
        // one SplitMix64 step from fnv("") ^ 0
        assert_eq!(
            derive_utterance_seed(0, ""),
            SplitMix64::new(0xcbf2_9ce4_8422_2325).next_u64()
        );
    }

    #[test]
    fn open01_stays_inside() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..10_000 {
            let u = rng.open01();
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
