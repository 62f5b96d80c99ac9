//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! user seed and addressed by a 64-bit stream id. ChaCha is counter based, so
//! the output of stream `s` depends only on `(seed, s)`; work split across
//! threads or reordered produces bit-identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use crate::norm::{Exponent, NormSpec};

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `stream` under key `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for a (major, minor) pair, e.g. (trial, color).
pub fn stream_id(major: u64, minor: u64) -> u64 {
    (major << 24) ^ minor
}

/// Uniform sample from the closed unit ball of `space`.
///
/// For finite `p` this uses the generalized Gaussian construction: with
/// `|g_i|^p ~ Gamma(1/p)` and an independent `Z ~ Exp(1)`, the point
/// `g / (sum |g_i|^p + Z)^(1/p)` is uniform in the unit `l_p` ball.
pub fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, space: &NormSpec) -> Vec<f64> {
    match space.p {
        Exponent::Infinity => (0..space.dim).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        Exponent::Finite(p) => {
            let gamma = Gamma::new(1.0 / p, 1.0).expect("shape 1/p is positive");
            let mut total = 0.0;
            let mut g: Vec<f64> = (0..space.dim)
                .map(|_| {
                    let magnitude_p: f64 = gamma.sample(rng);
                    total += magnitude_p;
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * magnitude_p.powf(1.0 / p)
                })
                .collect();
            let z: f64 = Exp1.sample(rng);
            let scale = (total + z).powf(1.0 / p);
            for v in &mut g {
                *v /= scale;
            }
            g
        }
    }
}

/// Standard Gaussian vector, used for random directions.
pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| rand_distr::StandardNormal.sample(rng))
        .collect()
}
