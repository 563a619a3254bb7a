//! Counter-based normal draws.
//!
//! Every path owns its own ChaCha8 stream selected by `path_index` under a
//! key derived from `master_seed`. Draws are consumed step-major and
//! coordinate-minor, so draw `(step, coord)` of a `d`-dimensional path lives
//! at word position `2 * (step * d + coord)` of that stream. Results are
//! therefore a pure function of `(master_seed, path_index, step, coord)` and
//! do not depend on how paths are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

/// Identifies the random stream of one Monte Carlo path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub path_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        Self {
            master_seed,
            path_index,
        }
    }
}

/// Maps a 64-bit word to the open interval (0, 1).
#[inline]
pub fn open_unit(word: u64) -> f64 {
    ((word >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Standard normal quantile.
#[inline]
pub fn normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Sequential standard normal draws for one path.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: SeedSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.master_seed);
        rng.set_stream(seed.path_index);
        Self { rng }
    }

    /// Positions the stream at draw `(step, coord)` of a `dim`-dimensional path.
    pub fn seek(&mut self, step: u64, coord: u64, dim: u64) {
        self.rng
            .set_word_pos(2 * (step as u128 * dim as u128 + coord as u128));
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        normal_quantile(open_unit(self.rng.next_u64()))
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.next_normal();
        }
    }
}
