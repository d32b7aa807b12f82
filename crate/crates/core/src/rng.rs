//! Named random sub-streams derived from one master seed.
//!
//! Every mechanism draws from its own ChaCha stream so switching one
//! mechanism off never shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Synthetic generative model parameters.
    SynthModel = 1,
    /// Synthetic per-sample draws.
    SynthSamples = 2,
    /// Contradictory-modality corruption.
    Noise = 3,
    /// Train/validation/test split and batch order.
    Data = 4,
    /// Negative pair sampling in the main loop.
    Pairing = 5,
    /// Feeder augmentation draws.
    Curriculum = 6,
    /// Main model initialisation.
    Init = 7,
    /// Pre-training model initialisation.
    PretrainInit = 8,
    /// Pre-training batch order and pair sampling.
    PretrainData = 9,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// A further split of `which`, e.g. one generator per feeding stream.
pub fn substream(seed: u64, which: Stream, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((which as u64) << 32) | (index + 1));
    rng
}
