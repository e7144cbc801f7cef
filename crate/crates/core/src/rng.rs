//! Seed-derived random substreams.
//!
//! Every random draw in a simulation is taken from a stream keyed by the run
//! seed plus a tuple of tags (purpose, placement, block, link indices). Streams
//! are therefore independent of evaluation order and worker count, and keeping
//! the tags fixed while changing `M` reproduces the same angles, gating coins
//! and fast-fading vectors.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Stream purposes.
pub mod tag {
    pub const PLACEMENT: u64 = 0x01;
    pub const ANGLES: u64 = 0x02;
    pub const GATING: u64 = 0x03;
    pub const FADING: u64 = 0x04;
    pub const NOISE: u64 = 0x05;
    pub const SAMPLE: u64 = 0x06;
    pub const POOL: u64 = 0x07;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed and a tag tuple into a 64-bit stream key.
pub fn stream_key(seed: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ 0x6C69_735F_7369_6D00);
    for (i, &t) in tags.iter().enumerate() {
        h = splitmix(h ^ splitmix(t.wrapping_add((i as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407))));
    }
    h
}

pub fn substream(seed: u64, tags: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(stream_key(seed, tags))
}

/// One draw from CN(0, 1).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<Complex64> {
    (0..len).map(|_| complex_normal(rng)).collect()
}
