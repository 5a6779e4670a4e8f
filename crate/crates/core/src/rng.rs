//! Seeded random streams.
//!
//! Every sampler in the crate takes `&mut impl Rng`. Reproducible runs derive
//! one ChaCha8 stream per purpose from a base seed, so trials and sweep points
//! never share a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used by the trainer inside one trial.
pub mod purpose {
    pub const INIT: u64 = 0;
    pub const CONTEXTS: u64 = 1;
    pub const TRAIN_DATA: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const FINAL_EVAL: u64 = 4;
}

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer, used to derive child seeds from a parent seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
