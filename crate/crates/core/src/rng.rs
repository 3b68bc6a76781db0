//! Counter-based Gaussian draws.
//!
//! Every normal variate is addressed by `(seed, stream, step, component)`.
//! The uniform behind it comes from a ChaCha8 keystream positioned directly
//! at the requested word, so a draw never depends on how many draws were made
//! before it or on which thread made them.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Clone, Debug)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
    components: u32,
    normal: Normal,
}

impl GaussianStream {
    /// `components` is the number of independent draws per step.
    pub fn new(seed: u64, stream: u64, components: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            components: components.max(1),
            normal: Normal::standard(),
        }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self, step: u64, component: u32) -> f64 {
        debug_assert!(component < self.components);
        let word = (step * u64::from(self.components) + u64::from(component)) * 2;
        self.rng.set_word_pos(u128::from(word));
        let bits = self.rng.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate by inverse CDF.
    pub fn standard_normal(&mut self, step: u64, component: u32) -> f64 {
        let u = self.uniform(step, component);
        self.normal.inverse_cdf(u)
    }
}
