//! Seed derivation for independent random streams.
//!
//! Every randomised unit of work (one user's random selection, one bootstrap
//! resample, one simulated campaign) gets its own generator seeded from a
//! master seed and the unit's identity, so results do not depend on the order
//! or the thread in which units are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains keep the derived seeds of unrelated consumers apart.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Domain {
    Selection = 0x5345_4c45_4354_0001,
    Bootstrap = 0x424f_4f54_5354_0002,
    Campaign = 0x4341_4d50_4149_0003,
    Targets = 0x5441_5247_4554_0004,
    Queries = 0x5155_4552_4945_0005,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a domain tag and a unit identifier.
pub fn derive(master: u64, domain: Domain, unit: u64) -> u64 {
    splitmix64(splitmix64(master ^ domain as u64) ^ splitmix64(unit.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Generator for one unit of work.
pub fn rng_for(master: u64, domain: Domain, unit: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, domain, unit))
}
