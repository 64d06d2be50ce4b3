//! Shared input builders for the benchmark targets.

use csl_core::rng::SplitMix64;
use ndarray::{Array1, Array2};

pub fn seeded_vector(n: usize, seed: u64) -> Array1<f64> {
    let mut rng = SplitMix64::new(seed);
    Array1::from_shape_fn(n, |_| rng.next_normal())
}

pub fn seeded_image(h: usize, w: usize, seed: u64) -> Array2<f64> {
    let mut rng = SplitMix64::new(seed);
    Array2::from_shape_fn((h, w), |_| rng.next_f64())
}
