//! Seeded random streams.
//!
//! One 64-bit seed drives everything. Each consumer gets its own ChaCha key
//! (derived from the seed and a [`Stream`] tag) and each path or particle its
//! own ChaCha stream id, so draws for path `i` do not depend on how many
//! other paths exist or in which order they are generated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    FbmPaths = 1,
    InitialStates = 2,
    Auxiliary = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// An independent seed for a sub-experiment labelled `tag`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag.wrapping_add(0x5EED)))
}

/// Generator for item `index` of the given stream.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(stream as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
