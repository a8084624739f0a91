//! Shared input builders for the criterion benches.

use hetcal_core::{Dataset, LabeledExample, Role};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// A labeled dataset with one informative binary feature, two noise
/// features, and logit-scale scores.
pub fn bench_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let rows: Vec<LabeledExample> = (0..n)
        .map(|_| {
            let label = u8::from(rng.random::<f64>() < 0.5);
            let x = if rng.random::<f64>() < 0.75 {
                label as f64
            } else {
                1.0 - label as f64
            };
            let score =
                if label == 1 { 1.0 } else { -1.0 } + 2.0 * rng.random_range(-1.5..1.5) + 1.8 * x;
            LabeledExample {
                features: vec![x, rng.random(), rng.random()],
                label,
                score,
            }
        })
        .collect();
    Dataset::new(rows, Role::Train).expect("valid rows")
}
