//! Seeded Gaussian noise with per-step, per-purpose substreams.
//!
//! Every draw comes from a ChaCha20 stream keyed by the run seed and selected
//! by `(step << 8) | purpose`, so a sample never depends on how many values
//! another step or another purpose consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::image::{Image, Shape};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    /// Noise added to the initial estimate.
    Init = 0,
    /// Fresh Gaussian `z` injected after a sampler step.
    Step = 1,
    /// Measurement noise `e`.
    Measurement = 2,
    /// Inpainting mask selection.
    Mask = 3,
    /// Monte Carlo verification draws.
    MonteCarlo = 4,
    /// Synthetic data.
    Synthetic = 5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseStreams {
    seed: u64,
}

impl NoiseStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self, step: u64, purpose: Purpose) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream((step << 8) | purpose as u64);
        rng
    }

    /// Standard normal image drawn from substream `(step, purpose)`.
    pub fn gaussian<T: Scalar>(&self, shape: Shape, step: u64, purpose: Purpose) -> Image<T> {
        let mut rng = self.rng(step, purpose);
        let data = (0..shape.len())
            .map(|_| T::of(StandardNormal.sample(&mut rng)))
            .collect();
        Image::from_raw(shape, data)
    }
}
