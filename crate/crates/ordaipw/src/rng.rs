//! Deterministic per-subject random streams.
//!
//! Each (seed, replicate, subject) triple is expanded through splitmix64
//! into a 32-byte ChaCha8 key, so a subject's draws depend only on the
//! triple: reordering subjects, changing worker counts, or regenerating a
//! single replicate all reproduce identical data.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// ChaCha8 stream for one subject of one replicate.
pub fn subject_rng(seed: u64, replicate: u64, subject: u64) -> ChaCha8Rng {
    let mut state = seed;
    state = splitmix64(&mut state) ^ replicate.wrapping_mul(0xd6e8feb86659fd93);
    state = splitmix64(&mut state) ^ subject.wrapping_mul(0xa5a5a5a5a5a5a5a5);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
