//! Splittable random streams.
//!
//! Every random quantity in a trial is drawn from a stream identified by
//! `(seed, purpose, trial)`. Streams never share state, so a trial produces
//! the same draws whether it runs first, last, or on another thread, and
//! switching one purpose on or off (e.g. channel-estimation noise) leaves the
//! draws of every other purpose untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// What a stream is used for within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Fading,
    NullBlock,
    AltBlock,
    NullEstimate,
    AltEstimate,
    /// Free-standing draws outside the trial engine (tests, examples).
    Auxiliary,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Fading => 0x01,
            StreamPurpose::NullBlock => 0x02,
            StreamPurpose::AltBlock => 0x03,
            StreamPurpose::NullEstimate => 0x04,
            StreamPurpose::AltEstimate => 0x05,
            StreamPurpose::Auxiliary => 0xff,
        }
    }
}

pub type TrialRng = ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStreams {
    seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The stream for one `(purpose, trial)` pair. The ChaCha key is derived
    /// from the seed and purpose; the trial index selects the ChaCha stream.
    pub fn stream(&self, purpose: StreamPurpose, trial: u64) -> TrialRng {
        let mut key = [0u8; 32];
        let mut state = self.seed ^ purpose.tag().rotate_left(56);
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(trial);
        rng
    }
}
