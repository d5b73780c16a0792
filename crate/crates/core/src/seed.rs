//! Deterministic seed derivation.
//!
//! Every random stream in a campaign is keyed by a base seed and a path of
//! integers (subject, block, trial, purpose), so a block replayed through the
//! session service sees exactly the draws it saw in-process.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used as the first path element.
pub mod stream {
    pub const SUBJECT: u64 = 0x5355_424a;
    pub const BLOCK: u64 = 0x424c_4b00;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const FEATURES: u64 = 0x4645_4154;
    pub const AGENT: u64 = 0x4147_4e54;
    pub const ORDER: u64 = 0x4f52_4452;
    pub const START: u64 = 0x5354_5254;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a path of integers into a new seed.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
