use alloc::vec::Vec;
use rand::Rng;

/// Inverse-CDF draw from a probability vector. Falls back to the last index
/// when rounding leaves the cumulative sum just below the uniform draw.
pub(crate) fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (idx, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return idx;
        }
    }
    probs.len() - 1
}

pub(crate) fn bernoulli<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if u < mean {
        1.0
    } else {
        0.0
    }
}

/// Uniform point on the simplex via normalized unit exponentials.
pub(crate) fn simplex<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..len)
        .map(|_| {
            let u: f64 = rng.random();
            -libm::log(1.0 - u)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        for d in &mut draws {
            *d /= total;
        }
    } else {
        draws.fill(1.0 / len as f64);
    }
    draws
}
