//! Seedable random streams and the handful of distributions the samplers draw from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

/// The generator used throughout. Streams are split with [`stream`].
pub type ChainRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` under `seed`; used for per-datum parallel work.
pub fn stream(seed: u64, index: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Poisson draw that accepts a zero (or vanishing) rate.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> usize {
    if !(rate > 0.0) {
        return 0;
    }
    let d = Poisson::new(rate).expect("finite positive Poisson rate");
    let x: f64 = d.sample(rng);
    x as usize
}

/// Gamma draw with shape/rate parameterization. Small shapes can underflow
/// to zero; the result is floored at the smallest normal float.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    let d = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    d.sample(rng).max(f64::MIN_POSITIVE)
}

/// Gaussian draw parameterized by precision.
pub fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, precision: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + z / precision.sqrt()
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform draw on the open interval (0, 1).
pub fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
