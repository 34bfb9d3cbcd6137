//! Counter-based per-path random streams: path `i` draws from a generator
//! keyed by `(seed, domain, i)` alone, so results are bitwise identical
//! whatever the worker count, and different operations (domains) sharing a
//! seed never overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream domain tags; keep distinct per consumer.
pub const DOMAIN_SIM: u64 = 1;
pub const DOMAIN_FEYNMAN_KAC: u64 = 2;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for one path of one stream domain.
pub fn path_rng(seed: u64, domain: u64, path: u64) -> ChaCha8Rng {
    let mut state = splitmix64(seed)
        ^ splitmix64(domain.wrapping_mul(0xA076_1D64_78BD_642F))
        ^ splitmix64(path.wrapping_mul(0xE703_7ED1_A0B4_28DB));
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Standard normal draws off a path generator.
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64, domain: u64, path: u64) -> Self {
        NormalStream {
            rng: path_rng(seed, domain, path),
        }
    }

    #[inline]
    pub fn next(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}
