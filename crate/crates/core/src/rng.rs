//! Seed derivation for reproducible, schedule-independent randomness.
//!
//! Every randomized operation in this crate takes an explicit `u64` seed and
//! derives per-item RNG streams from `(seed, stream)` so that work fanned out
//! across threads produces the same output as a sequential run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step; used only to expand seeds, never as the working RNG.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent RNG for one logical stream (chunk index, file index,
/// trial number) of a seeded operation. Identical `(seed, stream)` always
/// yields an identical generator, on every platform.
pub fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed ^ 0xD6E8_FEB8_6659_FD93u64.wrapping_mul(stream.wrapping_add(1));
    let mut key = [0u8; 32];
    for word in key.chunks_exact_mut(8) {
        word.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// RNG for a single-stream seeded operation.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    derived_rng(seed, 0)
}

/// Stable 64-bit hash of a string (FNV-1a). Used to derive per-speaker test
/// fixtures; pinned here rather than `DefaultHasher` so values never move
/// between toolchains.
pub fn stable_str_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
