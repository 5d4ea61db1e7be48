//! Seeded random streams.
//!
//! Every random draw in the simulator comes from a ChaCha8 stream whose seed
//! is derived from the experiment's master seed plus a purpose tag and up to
//! two indices (round, client, ...). ChaCha8 is a documented, platform
//! independent algorithm, so a given `(master, tag, a, b)` always produces the
//! same sequence regardless of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Purpose tags keep the streams for different consumers disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Centers = 1,
    Samples = 2,
    Corruption = 3,
    Partition = 4,
    Init = 5,
    Selection = 6,
    LocalShuffle = 7,
    ClientNoise = 8,
    TestSamples = 9,
    Subset = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 64-bit sub-seed from a master seed and a path of indices.
pub fn derive_seed(master: u64, purpose: Purpose, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ purpose as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.rotate_left(32))
}

pub fn stream(master: u64, purpose: Purpose, a: u64, b: u64) -> Stream {
    Stream::seed_from_u64(derive_seed(master, purpose, a, b))
}
