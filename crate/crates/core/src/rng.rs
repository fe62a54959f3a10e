//! Counter-based random streams.
//!
//! Every trial draws its randomness from a ChaCha8 stream addressed by
//! `(seed, trial index, purpose)`. Nothing is shared between trials, so a
//! trial can be regenerated in isolation and the result of a run does not
//! depend on how trials are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The independent sub-streams a trial consumes.
///
/// Each purpose starts at its own word offset inside the trial's ChaCha
/// stream, so e.g. the analyzer-setting choice never shares words with the
/// source or detector draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Per-station choice between the two analyzer settings.
    Settings,
    /// Pair emission: hidden variables and outcome sampling.
    Source,
    /// Detector-efficiency thinning.
    Detectors,
}

impl Purpose {
    fn word_offset(self) -> u128 {
        // 2^40 words per purpose; a trial uses a few dozen at most.
        const SPAN: u128 = 1 << 40;
        match self {
            Purpose::Settings => 0,
            Purpose::Source => SPAN,
            Purpose::Detectors => 2 * SPAN,
        }
    }
}

/// Factory for per-trial streams under one seed.
#[derive(Clone, Debug)]
pub struct StreamFactory {
    seed: u64,
    base: ChaCha8Rng,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The stream for trial `index` and the given purpose.
    pub fn stream(&self, index: u64, purpose: Purpose) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        rng.set_word_pos(purpose.word_offset());
        rng
    }
}
