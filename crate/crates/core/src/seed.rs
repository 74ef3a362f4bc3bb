//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator whose seed is
//! derived from a root seed by [`derive`]: `derive(root, k)` applies the
//! SplitMix64 finalizer to `root + (k + 1) * 0x9E3779B97F4A7C15`. Stages,
//! trials and folds each take their own counter, so adding work to one
//! stage never shifts the random numbers of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn derive(root: u64, counter: u64) -> u64 {
    let mut z = root.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter from a label (FNV-1a), for streams keyed by name rather than
/// position.
pub fn derive_str(root: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    derive(root, h)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(root: u64, counter: u64) -> ChaCha8Rng {
    rng(derive(root, counter))
}
