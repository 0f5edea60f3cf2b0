//! Deterministic random streams.
//!
//! Every random draw in the library comes from a stream keyed by
//! `(seed, tag, a, b)`, so results never depend on scheduling or thread count.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub mod tag {
    pub const INIT: u64 = 1;
    pub const EPIDEMIC: u64 = 2;
    pub const MOBILITY: u64 = 3;
    pub const RESAMPLE: u64 = 4;
    pub const OBSERVE: u64 = 5;
    pub const PREDICT: u64 = 6;
    pub const GIBBS: u64 = 7;
    pub const PANEL: u64 = 8;
    pub const EXPERIMENT: u64 = 9;
    pub const PERMUTE: u64 = 10;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit key from a master seed and three stream coordinates.
pub fn derive(seed: u64, tag: u64, a: u64, b: u64) -> u64 {
    let mut h = splitmix(seed);
    h = splitmix(h ^ tag.wrapping_mul(0xA24B_AED4_963E_E407));
    h = splitmix(h ^ a.wrapping_mul(0x9FB2_1C65_1E98_DF25));
    splitmix(h ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
}

pub fn stream(seed: u64, tag: u64, a: u64, b: u64) -> Rng {
    Rng::seed_from_u64(derive(seed, tag, a, b))
}
