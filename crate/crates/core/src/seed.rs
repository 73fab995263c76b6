//! Counter-based derivation of independent random streams from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keeping the different consumers of randomness apart.
pub mod stream {
    pub const FIELDS: u64 = 1;
    pub const PAIR: u64 = 2;
    pub const STUDY: u64 = 3;
    pub const REGIONAL: u64 = 4;
    pub const SCENARIO: u64 = 5;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` of stream `tag` under `master`.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(tag)) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn derive_rng(master: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, index))
}
