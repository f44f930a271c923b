//! Seeded branch-outcome streams.
//!
//! Every subband owns an independent ChaCha stream derived from the run seed
//! and its subband index, so the profiler and the simulator draw identical
//! outcomes for a subband regardless of how events interleave.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct OutcomeStream {
    rng: ChaCha8Rng,
}

impl OutcomeStream {
    pub fn for_subband(seed: u64, subband: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(subband));
        Self { rng }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn draw(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}
