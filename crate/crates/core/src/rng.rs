//! Seeded random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by
//! `(master seed, purpose, index)`. The sample set of a Monte Carlo run is
//! therefore a function of the seed and the sample count only, never of how
//! the index range was split across worker threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Use-site tag mixed into the substream key so that different consumers of
/// the same master seed never share a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    MeasurementSettings,
    ReducedCube,
    PoissonTrial,
    LocalUnitaries,
    Synthetic,
    Custom(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::MeasurementSettings => 0x5e77_1a65,
            Purpose::ReducedCube => 0xc0be_0001,
            Purpose::PoissonTrial => 0x9015_5017,
            Purpose::LocalUnitaries => 0x0001_0ca1,
            Purpose::Synthetic => 0x5171_7e71,
            Purpose::Custom(t) => t ^ 0xa5a5_a5a5_0000_0000,
        }
    }
}

// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Returns the generator for one `(seed, purpose, index)` triple.
pub fn substream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let a = mix(seed);
    let b = mix(a ^ purpose.tag());
    let c = mix(b ^ index);
    let mut key = [0u8; 32];
    let mut state = c;
    for chunk in key.chunks_exact_mut(8) {
        state = mix(state ^ a);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
