//! Seeded, stream-splittable random number generation.
//!
//! Every random consumer derives its generator from `(seed, stream)` so parallel
//! batches reproduce independently of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

/// Generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn fill_normal(rng: &mut Rng, out: &mut [f64]) {
    for v in out {
        *v = StandardNormal.sample(rng);
    }
}

/// Stream ids reserved for the library's own consumers; batch ids are added on top.
pub mod streams {
    pub const EXPAND: u64 = 1 << 40;
    pub const NOISE_INNER: u64 = 2 << 40;
    pub const PAIRS: u64 = 3 << 40;
    pub const CHECKS: u64 = 4 << 40;
    pub const PIPELINE_F: u64 = 5 << 40;
    pub const PIPELINE_G: u64 = 6 << 40;
    pub const REPORT: u64 = 7 << 40;
    pub const GRID: u64 = 8 << 40;
}
