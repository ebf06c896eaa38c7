#![allow(dead_code)]

use edbandit_core::instance::generate_synthetic;
use edbandit_core::{Instance, ProblemDims};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn dims(x: usize, v: usize, n: usize, e: usize, t: u64) -> ProblemDims {
    ProblemDims {
        num_contexts: x,
        num_actions: v,
        num_experts: n,
        num_episodes: e,
        horizon: t,
    }
}

/// Compliant instance with floors at half the uniform probability.
pub fn instance(seed: u64, x: usize, v: usize, n: usize, e: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_synthetic(dims(x, v, n, e, 100), 0.5 / x as f64, 0.5 / v as f64, &mut rng).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
