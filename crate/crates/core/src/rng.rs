//! Deterministic random-stream derivation.
//!
//! One 64-bit master seed governs a whole run. Each consumer asks for a
//! substream identified by a domain label and a counter; the substream seed is
//! `splitmix64(master ^ splitmix64(domain_tag) ^ counter)`. Streams with
//! different labels or counters are independent for practical purposes, and a
//! given (master, label, counter) triple always yields the same sequence, no
//! matter in which order substreams are drawn.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain labels for substream separation. The discriminant value is part of
/// the on-disk determinism contract: do not reorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    Channel = 1,
    OptimizerInit = 2,
    PilotNoise = 3,
    PilotConfigs = 4,
    Waveform = 5,
    Sweep = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seed for the (domain, counter) substream of a master seed.
pub fn substream_seed(master: u64, domain: StreamDomain, counter: u64) -> u64 {
    splitmix64(master ^ splitmix64(domain as u64) ^ counter)
}

/// Seeded generator for the given substream.
pub fn substream(master: u64, domain: StreamDomain, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(master, domain, counter))
}
