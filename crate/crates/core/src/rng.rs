//! Deterministic, splittable random streams.
//!
//! Every stochastic operation in the crate draws from a [`ChaCha8Rng`]
//! whose seed is derived by hashing a master seed together with a stream
//! label and an index. Sample `i` of any stream therefore depends only on
//! `(master_seed, label, i)`, never on how many samples were drawn before
//! it, so streams can be produced out of order or in parallel.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; used as the seed-mixing hash.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a master seed with a stream label and per-sample index.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = mix(master);
    for b in label.bytes() {
        h = mix(h ^ u64::from(b));
    }
    mix(h ^ index)
}

/// RNG for sample `index` of the stream named `label`.
pub fn stream_rng(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, index))
}
