//! Counter-based random streams.
//!
//! Every random quantity is drawn from its own ChaCha8 stream selected by a
//! purpose tag and a small index tuple (trial, cell, cell, user). A draw is
//! therefore a pure function of the master seed and its indices, and the
//! order in which trials are evaluated does not matter.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{CVector, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Small-scale fading `w_jlk`.
    Fading = 1,
    /// Training noise `n_jk`.
    PilotNoise = 2,
    /// Resolvent oracle draws.
    Oracle = 3,
    /// Random initial points and test instances.
    Auxiliary = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream identifier for `(purpose, indices)`.
pub fn stream_id(purpose: Purpose, indices: [u64; 4]) -> u64 {
    indices
        .iter()
        .fold(splitmix64(purpose as u64), |acc, &i| splitmix64(acc ^ i))
}

/// Independent generator for one `(purpose, indices)` tuple under `seed`.
pub fn substream(seed: u64, purpose: Purpose, indices: [u64; 4]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(purpose, indices));
    rng
}

/// One standard circular complex Gaussian sample, `(x + iy)/sqrt(2)`.
pub fn circular_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    C64::new(x, y) * core::f64::consts::FRAC_1_SQRT_2
}

/// Vector of `n` i.i.d. `CN(0, 1)` entries.
pub fn circular_gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    DVector::from_fn(n, |_, _| circular_gaussian(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = circular_gaussian_vector(&mut substream(7, Purpose::Fading, [0, 1, 2, 3]), 8);
        let b = circular_gaussian_vector(&mut substream(7, Purpose::Fading, [0, 1, 2, 3]), 8);
        let c = circular_gaussian_vector(&mut substream(7, Purpose::Fading, [0, 1, 3, 2]), 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unit_variance() {
        let mut rng = substream(1, Purpose::Auxiliary, [0; 4]);
        let n = 200_000;
        let power: f64 = (0..n).map(|_| circular_gaussian(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((power - 1.0).abs() < 0.01, "{power}");
    }
}
