//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream keyed by a
//! master seed and a stream id. Stream ids are derived from task coordinates
//! (cell, replicate, attempt, ...) so results never depend on scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type RngStream = ChaCha8Rng;

/// Stream `stream_id` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream_id: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a list of coordinates into a single 64-bit id.
pub fn derive_id(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Unit-rate exponential via `-log U`.
pub fn exponential(rng: &mut impl RngCore) -> f64 {
    -open_unit(rng).ln()
}

/// Standard Fréchet with tail index `kappa` via `(-log U)^(-1/kappa)`.
pub fn frechet(rng: &mut impl RngCore, kappa: f64) -> f64 {
    (-open_unit(rng).ln()).powf(-1.0 / kappa)
}
