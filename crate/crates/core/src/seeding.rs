//! Named, independent random streams derived from one scenario seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const POPULATION_STREAM: &str = "population";
pub const SURVEY_STREAM: &str = "survey";
pub const NOISE_STREAM: &str = "noise";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a stream name into a base seed (FNV-1a over the name, then splitmix).
pub fn stream_seed(seed: u64, stream: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(seed ^ h)
}

pub fn stream_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, stream))
}
