//! Keyed random streams.
//!
//! Every random draw in a run comes from a stream selected by a key
//! `(purpose, coordinates...)` under the run seed. The key picks a ChaCha8
//! stream (counter based, so a pure function of `(seed, key)`), whose first
//! block seeds the xoshiro generator that the simulation loops consume. The
//! order in which worker threads pick up particles cannot change any draw.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// The concrete generator handed to models and samplers.
pub type RngStream = Xoshiro256PlusPlus;

/// What a stream is used for. Part of the stream key, so two purposes at the
/// same coordinates never share draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Prior = 1,
    Propagate = 2,
    Resample = 3,
    Rejuvenate = 4,
    Data = 5,
    Pilot = 6,
    Replicate = 7,
    Validation = 8,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Factory for keyed streams under one run seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamFactory {
    seed: u64,
    key: [u8; 32],
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self { seed, key }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The stream for `purpose` at the given coordinates (typically
    /// `[t, m]` or `[t, m, n]`).
    pub fn stream(&self, purpose: Purpose, coords: &[u64]) -> RngStream {
        let mut id = splitmix64(purpose as u64);
        for &c in coords {
            id = splitmix64(id ^ splitmix64(c.wrapping_add(0x632b_e59b_d9b4_e019)));
        }
        let mut chacha = ChaCha8Rng::from_seed(self.key);
        chacha.set_stream(id);
        let mut seed = [0u8; 32];
        chacha.fill_bytes(&mut seed);
        Xoshiro256PlusPlus::from_seed(seed)
    }

    /// A derived factory, used to give independent replicates their own
    /// seed space.
    pub fn child(&self, index: u64) -> StreamFactory {
        StreamFactory::new(splitmix64(self.seed ^ splitmix64(index ^ 0xa076_1d64_78bd_642f)))
    }
}
