//! Seeded random substreams.
//!
//! Every consumer of randomness derives its own ChaCha stream from
//! `(seed, tag, index)`, so per-frame work can run in any order (or in
//! parallel) and still reproduce bit-identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_SCENE: u64 = 1;
pub const TAG_CAMERA: u64 = 2;
pub const TAG_OBSERVATION: u64 = 3;
pub const TAG_PASS_NOISE: u64 = 4;
pub const TAG_MISCALIBRATION: u64 = 5;
pub const TAG_PROJECTION: u64 = 6;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, tag, index)`.
pub fn substream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(tag));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
