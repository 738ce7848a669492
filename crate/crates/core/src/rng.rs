//! Seed derivation for independent random substreams.
//!
//! Every stochastic quantity in the crate (one afferent's noise train, the
//! jitter of one presentation, one run of a sweep) draws from its own
//! generator, seeded by mixing a parent seed with a stream index. Streams
//! never share state, so results do not depend on evaluation order or on
//! how many sibling streams exist.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of child stream `index` from `seed`.
pub fn substream(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Seed for a child stream inside a named domain, so that e.g. noise and
/// jitter streams derived from one master seed never collide.
pub fn domain_stream(seed: u64, domain: &str, index: u64) -> u64 {
    let tag = domain
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    substream(substream(seed, tag), index)
}

pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
