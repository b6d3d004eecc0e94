//! Seed lattice for reproducible Monte Carlo runs.
//!
//! Every random consumer gets its own ChaCha8 stream, addressed by a path of
//! integers (master seed, power, block, role, particle, ...). Streams do not
//! depend on the order in which work items are scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Roles inside one Monte Carlo block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Symbols = 1,
    Channel = 2,
    Particles = 3,
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(parent);
    rng.set_stream(label);
    rng.next_u64()
}

/// Derives a seed along a path of labels.
pub fn derive_path(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |seed, &label| derive_seed(seed, label))
}

/// Opens stream `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
