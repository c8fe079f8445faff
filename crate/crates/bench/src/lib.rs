//! Seeded workloads for the benchmarks.

use cpla_core::{BoundingBox, Detection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_boxes(n: usize, extent: f64, seed: u64) -> Vec<(BoundingBox, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (x, y) = (rng.random_range(0.0..extent), rng.random_range(0.0..extent));
            let (w, h) = (rng.random_range(10.0..80.0), rng.random_range(10.0..80.0));
            (BoundingBox::new(x, y, x + w, y + h).unwrap(), rng.random_range(0.0..1.0))
        })
        .collect()
}

/// `frames` frames of `per_frame` single-class detections drifting right.
pub fn detection_run(frames: usize, per_frame: usize, seed: u64) -> Vec<Vec<Detection>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..frames)
        .map(|t| {
            (0..per_frame)
                .map(|k| {
                    let x = 40.0 * k as f64 + t as f64 + rng.random_range(-2.0..2.0);
                    let b = BoundingBox::new(x, 0.0, x + 30.0, 60.0).unwrap();
                    Detection::new(b, 0, rng.random_range(0.0..1.0)).unwrap()
                })
                .collect()
        })
        .collect()
}

pub fn link_scores(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.0..2.0)).collect()
}
