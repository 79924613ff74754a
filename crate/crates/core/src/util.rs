//! Seed derivation and small shared helpers.
//!
//! Every random quantity in the crate flows from a single `u64` seed through
//! [`derive_seed`], so independent streams (init, batch sampling, per-layer
//! draws) never share state and runs are bit-reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives an independent stream seed from a base seed. Splitmix64 finalizer;
/// distinct `stream` values give decorrelated streams for any base.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for a derived stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Stream ids, fixed so layouts never silently reshuffle between versions.
pub mod streams {
    /// Parameter initialization draws.
    pub const INIT: u64 = 1;
    /// Mini-batch pixel sampling during fitting.
    pub const BATCH: u64 = 2;
    /// Second independent init (two-SIREN strategy).
    pub const INIT_B: u64 = 3;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derive_seed_is_deterministic() {
        assert_eq!(derive_seed(7, 1), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 1), derive_seed(7, 2), "streams must differ");
        assert_ne!(derive_seed(7, 1), derive_seed(8, 1), "seeds must differ");
    }

    #[test]
    fn stream_rng_reproduces_sequence() {
        let mut a = stream_rng(42, streams::INIT);
        let mut b = stream_rng(42, streams::INIT);
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
