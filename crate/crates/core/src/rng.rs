use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Derive an independent seed for a named sub-task from a base seed (splitmix64).
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(base: u64, tag: u64) -> Rng {
    rng_from(derive_seed(base, tag))
}

// Stable tags for the streams a run consumes.
pub(crate) const TAG_SPLIT: u64 = 1;
pub(crate) const TAG_INIT: u64 = 2;
pub(crate) const TAG_BATCHES: u64 = 3;
pub(crate) const TAG_CORRUPTION: u64 = 4;
pub(crate) const TAG_ABLATION: u64 = 5;
pub(crate) const TAG_PROBE: u64 = 6;
