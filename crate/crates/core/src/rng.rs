//! Seed derivation for reproducible parallel trials.
//!
//! Every random stream in the crate is a ChaCha8 generator (a counter-based
//! block cipher RNG). A stream is identified by `(master_seed, domain, index)`
//! and its 64-bit seed is
//!
//! ```text
//! child = splitmix64(splitmix64(master_seed ^ domain) ^ index)
//! ```
//!
//! where `splitmix64` is the finalizer of Steele, Lea & Flood's SplitMix64
//! (`z += 0x9E3779B97F4A7C15; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
//! z = (z ^ z>>27) * 0x94D049BB133111EB; z ^ z>>31`). Domains separate the
//! roles of streams (trial samples, reference ensembles, resampling, ...), so
//! trial `k` draws the same numbers regardless of how many trials run or in
//! which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream roles.
pub mod domain {
    pub const TRIAL_SAMPLE: u64 = 0x7472_6961_6c00_0001;
    pub const REFERENCE: u64 = 0x7265_6665_7200_0002;
    pub const RESAMPLE: u64 = 0x7265_7361_6d00_0003;
    pub const PLANES: u64 = 0x706c_616e_6500_0004;
    pub const ENSEMBLE: u64 = 0x656e_7365_6d00_0005;
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` of role `domain` under `master_seed`.
pub fn child_seed(master_seed: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed ^ domain) ^ index)
}

pub fn stream(master_seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(master_seed, domain, index))
}

pub fn from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
