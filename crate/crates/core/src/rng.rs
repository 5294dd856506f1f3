//! Deterministic seed derivation.
//!
//! Every randomized stage derives its own RNG from `(seed, tags...)`. Stages
//! that run on the thread pool (per-sample extraction, per-candidate pairing
//! evaluation, per-run sweeps) draw from streams keyed by their index, so
//! parallel and sequential execution produce bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the fixed derivation points of the pipeline.
pub mod tags {
    pub const INIT: u64 = 1;
    pub const VISIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const EXTRACT: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const SYNTH: u64 = 7;
    pub const GMM: u64 = 8;
    pub const ASSIGN: u64 = 9;
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a list of stream tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(seed);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    s
}

/// Deterministic RNG for a derived stream.
pub fn stream_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derivation_is_stable_and_tag_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
    }

    #[test]
    fn stream_rng_reproduces() {
        let a = stream_rng(42, &[tags::SHUFFLE, 3]).next_u64();
        let b = stream_rng(42, &[tags::SHUFFLE, 3]).next_u64();
        assert_eq!(a, b);
    }
}
