//! Seed derivation.
//!
//! Every random stream in the simulator is keyed by a tuple of integers
//! (run seed, request, token position, layer, ...). Keying streams instead of
//! sharing one generator keeps traces identical across policies whose batch
//! timing differs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a key tuple into a single 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(GOLDEN, |acc, &p| splitmix(acc.wrapping_add(GOLDEN) ^ splitmix(p)))
}

pub fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}

/// Domain tags so that streams for different purposes never collide.
pub(crate) mod tag {
    pub const ARRIVALS: u64 = 1;
    pub const LENGTHS: u64 = 2;
    pub const ROUTING: u64 = 3;
    pub const POPULARITY: u64 = 4;
    pub const PREDICTOR: u64 = 5;
    pub const SYNTH_WEIGHTS: u64 = 6;
}
