//! Reproducible random streams.
//!
//! A run seed and an iteration index are mixed with SplitMix64 into a
//! ChaCha8 key; independent consumers within one iteration (episodes,
//! agents) use distinct ChaCha stream ids under that key.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 256-bit key for `(seed, iteration)`.
pub fn derive_key(seed: u64, iteration: u64) -> [u8; 32] {
    let mut state = seed;
    let mixed = splitmix64(&mut state) ^ iteration.wrapping_mul(GOLDEN);
    let mut state = mixed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Generator for stream `stream` of `(seed, iteration)`.
pub fn stream_rng(seed: u64, iteration: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(derive_key(seed, iteration));
    rng.set_stream(stream);
    rng
}
