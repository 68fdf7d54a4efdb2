//! Seeding contract.
//!
//! Every consumer of randomness gets its own ChaCha8 stream derived from a
//! run seed, a worker index and a fixed purpose id, so adding draws in one
//! place never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    NetworkInit = 1,
    ResetPerturbation = 2,
    Dynamics = 3,
    ObservationNoise = 4,
    ActionNoise = 5,
    Delay = 6,
    Flip = 7,
    Exploration = 8,
    Replay = 9,
    Smoothing = 10,
    Evaluation = 11,
    Bootstrap = 12,
    EpisodeSeeds = 13,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream for `purpose` owned by `worker` of the run seeded with `seed`.
pub fn stream(seed: u64, worker: u64, purpose: Purpose) -> StreamRng {
    let mixed = splitmix(seed ^ worker.wrapping_add(1).wrapping_mul(GOLDEN));
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(purpose as u64);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
