//! Deterministic seed derivation.
//!
//! Every stochastic stage derives its own stream from `(master seed, tag)`,
//! so results are independent of scheduling and of the order in which other
//! stages consume randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a child seed from a master seed and a string tag.
///
/// FNV-1a over the tag bytes, mixed with the master seed and finalised
/// with splitmix64. Stable across platforms.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(master ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ChaCha8 stream for a `(master, tag)` pair.
pub fn seeded_rng(master: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag))
}

/// Deterministic sample of `min(k, n)` distinct indices from `0..n`,
/// returned in ascending order.
pub fn sample_indices_without_replacement(n: usize, k: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = k.min(n);
    for i in 0..k {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }
    let mut chosen = indices[..k].to_vec();
    chosen.sort_unstable();
    chosen
}
