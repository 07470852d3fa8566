//! Fixtures shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use sisvae::evalkit::LabeledScores;
use sisvae::rng::Rng as ChaCha;
use sisvae::{ModelConfig, ModelParams};

pub fn normal(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = ChaCha::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || r.sample(StandardNormal))
}

/// Seeded model with `feat_dim = h`.
pub fn model(m: usize, h: usize, z: usize) -> ModelParams {
    ModelParams::init(ModelConfig::new(m, h, z), 0).expect("valid config")
}

/// `n` scores with about 2% positives.
pub fn labeled(n: usize, seed: u64) -> LabeledScores {
    let mut r = ChaCha::seed_from_u64(seed);
    let labels: Vec<u8> = (0..n).map(|_| r.random_bool(0.02) as u8).collect();
    let scores = labels
        .iter()
        .map(|&l| l as f64 + r.sample::<f64, _>(StandardNormal))
        .collect();
    LabeledScores::new(scores, labels).expect("both classes present")
}
