//! Seeded input generators shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vwskill_core::model::FeatureMatrix;
use vwskill_core::{LabelSeries, PredictionSeries, ProbabilitySeries};

/// Labels with roughly `rate` positives and a noisy copy as predictions.
pub fn binary_pair(n: usize, rate: f64, seed: u64) -> (LabelSeries, PredictionSeries) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y: Vec<bool> = (0..n).map(|_| rng.gen_bool(rate)).collect();
    y[0] = true;
    let p = y.iter().map(|&v| if rng.gen_bool(0.1) { !v } else { v }).collect();
    (LabelSeries::from_bools(y).unwrap(), PredictionSeries::from_bools(p))
}

/// Probabilities loosely correlated with the labels.
pub fn scored_labels(n: usize, rate: f64, seed: u64) -> (LabelSeries, ProbabilitySeries) {
    let (y, _) = binary_pair(n, rate, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let probs = y
        .as_slice()
        .iter()
        .map(|&v| {
            let base: f64 = rng.gen();
            if v {
                0.5 * base + 0.5 * rng.gen::<f64>()
            } else {
                0.6 * base
            }
        })
        .collect();
    (y, ProbabilitySeries::new(probs).unwrap())
}

pub fn features(rows: usize, cols: usize, seed: u64) -> (FeatureMatrix, LabelSeries) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let labels: Vec<bool> = (0..rows).map(|r| data[r * cols] > 0.3).collect();
    (
        FeatureMatrix::new(rows, cols, data).unwrap(),
        LabelSeries::from_bools(labels).unwrap(),
    )
}
