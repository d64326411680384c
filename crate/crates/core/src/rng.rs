//! Seeded randomness for simulation runs.
//!
//! Every engine instance owns its own [`SimRng`]. Seeds for independent
//! cells (seed, level, trial, ...) are derived with [`derive_seed`] so that
//! results never depend on execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic, platform-stable generator used throughout the simulator.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a list of cell coordinates into a new seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Domain tags keep derived streams for different purposes apart.
pub mod stream {
    pub const ENGINE: u64 = 0x656e_6769_6e65;
    pub const STIMULUS: u64 = 0x7374_696d;
    pub const BOOTSTRAP: u64 = 0x626f_6f74;
    pub const TRAINING: u64 = 0x0074_7261_696e;
}

/// Standard logistic variate with scale `s` (location 0).
pub fn logistic(rng: &mut SimRng, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    // open interval keeps ln finite
    let u: f64 = loop {
        let u: f64 = rng.random();
        if u > 0.0 && u < 1.0 {
            break u;
        }
    };
    s * (u / (1.0 - u)).ln()
}
