//! Seeded random streams.
//!
//! One master seed fans out into independent ChaCha streams, one per purpose,
//! so adding draws to one stage never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_SPLIT: u64 = 1;
pub const STREAM_INIT: u64 = 2;
pub const STREAM_SHUFFLE: u64 = 3;
pub const STREAM_DROPOUT: u64 = 4;
pub const STREAM_REFINE_INIT: u64 = 5;
pub const STREAM_REFINE_SHUFFLE: u64 = 6;
pub const STREAM_SYNTH: u64 = 7;
pub const STREAM_BASELINE: u64 = 8;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
