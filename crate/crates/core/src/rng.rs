//! Seeding conventions.
//!
//! Every stochastic component takes an explicit `u64` seed. Child seeds are
//! derived with SplitMix64 over `(parent, label)` and fed to `ChaCha8Rng`, so
//! traces are reproducible across platforms and implementations:
//!
//! ```text
//! child(seed, label) = splitmix64(seed ^ splitmix64(label))
//! rng(seed)          = ChaCha8Rng::seed_from_u64(seed)
//! ```
//!
//! Stateless draws (used where the same random value must be recovered from
//! a key, e.g. stochastic pool functions) use [`unit_hash`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn child_seed(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label))
}

pub fn rng(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in `[0, 1)` determined entirely by `(seed, a, b)`.
pub fn unit_hash(seed: u64, a: u64, b: u64) -> f64 {
    let h = splitmix64(child_seed(child_seed(seed, a), b));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
