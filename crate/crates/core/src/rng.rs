//! Seeded random streams.
//!
//! Every stochastic step draws from ChaCha8 (`rand_chacha::ChaCha8Rng`), a
//! counter-based generator whose output is fixed by its 256-bit key and
//! 64-bit stream id, independent of platform and word size. A run seed
//! becomes the key via `seed_from_u64`; independent units of work (plants,
//! permutations, trees, folds) get their own stream id so results never
//! depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for numbered stream `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for a named stream, e.g. one per plant id.
pub fn named_stream(seed: u64, name: &str) -> StreamRng {
    stream(seed, fnv1a(name.as_bytes()))
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a child seed, so one top-level seed can fan out to stages.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    fnv1a(label.as_bytes()) ^ seed.rotate_left(17) ^ 0x9e37_79b9_7f4a_7c15
}
