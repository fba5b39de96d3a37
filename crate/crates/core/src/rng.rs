//! Counter-based derivation of independent RNG streams.
//!
//! Every random draw in the sampled algorithms comes from a stream keyed by the
//! coordinates of the draw, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a sequence of words into one 64-bit key.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, w| splitmix64(acc ^ splitmix64(*w)))
}

/// A generator keyed by `words`.
pub fn stream(words: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(mix(words))
}
