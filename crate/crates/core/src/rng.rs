//! Seeded random number generation.
//!
//! One master seed fans out into independent ChaCha streams so that, e.g.,
//! switching the temperature on or off never perturbs the minibatch order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::mat::Matrix;

/// Fixed stream ids off the master seed.
pub const STREAM_INIT: u64 = 0;
pub const STREAM_BATCH: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
/// Streams for dataset generation (keyed off the data seed, not the
/// trajectory seed, so test-set size changes never perturb the train set).
pub const STREAM_DATA_TRAIN: u64 = 10;
pub const STREAM_DATA_TEST: u64 = 11;

/// Deterministic generator: ChaCha8 (256-bit state), seed + stream id.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn from_seed_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { inner }
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn standard_normal_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = self.standard_normal();
        }
        m
    }

    pub fn standard_normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }

    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        use rand::Rng as _;
        self.inner.random_range(lo..hi)
    }

    /// `k` distinct indices from `0..n`, uniform without replacement.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k).into_vec()
    }
}

/// The three per-trajectory streams: parameter init, minibatch selection,
/// injected noise.
#[derive(Debug, Clone)]
pub struct SeedStreams {
    pub init: Rng,
    pub batch: Rng,
    pub noise: Rng,
}

impl SeedStreams {
    pub fn new(master_seed: u64) -> Self {
        SeedStreams {
            init: Rng::from_seed_stream(master_seed, STREAM_INIT),
            batch: Rng::from_seed_stream(master_seed, STREAM_BATCH),
            noise: Rng::from_seed_stream(master_seed, STREAM_NOISE),
        }
    }
}
