//! Seed derivation so per-user randomness does not depend on visiting order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic stream keyed by a base seed and a path of indices.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let key = path.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)));
    ChaCha8Rng::seed_from_u64(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, &[1, 2]).random();
        let b: u64 = stream(7, &[1, 2]).random();
        let c: u64 = stream(7, &[2, 1]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
