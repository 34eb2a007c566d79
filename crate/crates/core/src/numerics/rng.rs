//! Seeded random streams. Each purpose draws from its own ChaCha stream, so
//! extra draws for one purpose never shift another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Split = 2,
    Synthetic = 3,
    Subsample = 4,
    WarmupDropout = 5,
    FinetuneDropout = 6,
    ItemBatch = 7,
    GradCheck = 8,
}

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Stream keyed additionally by a sub-index (e.g. one per epoch).
pub fn substream_rng(seed: u64, stream: Stream, sub: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ sub.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream as u64);
    rng
}
