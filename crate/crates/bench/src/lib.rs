//! Criterion benchmarks for `bkop`; see `benches/core.rs`.
//!
//! Shared fixtures live here so individual benches stay small.

use bkop::{KernelFamily, KernelSpec, ObservationHistory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` uniformly random observations of `sum(sin(3 x_i))` on the unit cube.
pub fn random_history(dim: usize, n: usize, seed: u64) -> ObservationHistory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = ObservationHistory::new(dim);
    while h.len() < n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let y = x.iter().map(|v| (3.0 * v).sin()).sum();
        h.push(x, y).expect("random points are distinct");
    }
    h
}

pub fn matern(dim: usize) -> KernelSpec {
    KernelSpec::new(KernelFamily::Matern52, vec![0.5; dim], 1.0).expect("valid kernel")
}
