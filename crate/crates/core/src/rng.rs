//! Seed derivation for named random streams.
//!
//! Every stage of an experiment draws from its own generator derived from the
//! master seed and a stream name, so reordering stages never changes what any
//! single stage sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const SPLIT: &str = "split";
pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";
pub const SAMPLER: &str = "sampler";
pub const EVAL: &str = "eval";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a of the stream name mixed with the master seed.
pub fn stream_seed(master: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(master ^ splitmix64(h))
}

pub fn stream(master: u64, name: &str) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(master, name))
}
