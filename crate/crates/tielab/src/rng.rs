//! Deterministic random streams keyed by `(seed, stream)`.
//!
//! ChaCha8 exposes a 64-bit stream id next to the key, so every
//! `(master seed, stream)` pair addresses an independent sequence without
//! any coordination between workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive a child stream id from a parent stream and a small tag.
///
/// Used when one logical draw needs several independent sequences (for
/// example the strict and tie halves of a mixture) that must not collide
/// with sibling streams handed out by a sweep.
pub fn substream(stream: u64, tag: u64) -> u64 {
    splitmix64(stream ^ splitmix64(tag.wrapping_add(0x5157_4e52_5f54_4147)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
