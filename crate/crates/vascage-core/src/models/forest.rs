//! Random forest regressor: weight-proportional bootstrap per tree, a
//! random feature subset per node, and unweighted averaging of tree
//! predictions. Each tree draws from its own stream seeded by the run
//! seed xor the tree index, so trees can be rebuilt independently.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit, Tree, TreeConfig};

pub const N_TREES: usize = 300;
pub const MAX_DEPTH: usize = 12;

/// Candidate features per node: a third of the total, rounded up.
pub fn default_mtry(n_features: usize) -> usize {
    n_features.div_ceil(3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub seed: u64,
}

impl ForestModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Sample `n` indices with replacement, probability proportional to weight.
fn weighted_bootstrap<R: Rng>(w: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(w.len());
    let mut total = 0.0;
    for &wi in w {
        total += wi;
        cumulative.push(total);
    }
    (0..n)
        .map(|_| {
            let r = rng.random_range(0.0..total);
            cumulative.partition_point(|&c| c <= r).min(w.len() - 1)
        })
        .collect()
}

/// Train the forest on pre-selected feature columns.
pub fn train_forest(x: &[Vec<f64>], y: &[f64], w: &[f64], seed: u64) -> ForestModel {
    let n = x.len();
    let cfg = TreeConfig {
        max_depth: MAX_DEPTH,
        mtry: Some(default_mtry(x[0].len())),
    };
    let unit = vec![1.0; n];
    let trees = (0..N_TREES)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t as u64);
            let idx = weighted_bootstrap(w, n, &mut rng);
            fit(x, y, &unit, &idx, cfg, &mut rng)
        })
        .collect();
    ForestModel { trees, seed }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..5).map(|_| rng.random_range(0.0..10.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 3.0 * r[0] - r[2] + rng.random_range(-0.5..0.5))
            .collect();
        (x, y)
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = toy_data(50, 1);
        let w = vec![1.0; 50];
        let a = train_forest(&x, &y, &w, 99);
        let b = train_forest(&x, &y, &w, 99);
        assert_eq!(a, b);
        let c = train_forest(&x, &y, &w, 100);
        assert_ne!(a, c);
    }

    #[test]
    fn learns_a_linear_signal() {
        let (x, y) = toy_data(150, 2);
        let w = vec![1.0; 150];
        let model = train_forest(&x, &y, &w, 7);
        let mut sse = 0.0;
        let mut var = 0.0;
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        for (r, &t) in x.iter().zip(&y) {
            sse += (model.predict(r) - t).powi(2);
            var += (t - mean).powi(2);
        }
        assert!(sse / var < 0.1, "train R^2 too low: {}", 1.0 - sse / var);
    }

    #[test]
    fn predictions_stay_inside_training_range() {
        let (x, y) = toy_data(60, 3);
        let w = vec![1.0; 60];
        let model = train_forest(&x, &y, &w, 5);
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let probe = vec![vec![-100.0; 5], vec![1000.0; 5], vec![0.0; 5]];
        for r in &probe {
            let p = model.predict(r);
            assert!(p >= lo && p <= hi, "{p} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn bootstrap_tracks_weights() {
        let w = vec![1.0, 1.0, 8.0, 0.0001];
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut counts = [0usize; 4];
        for _ in 0..200 {
            for i in weighted_bootstrap(&w, 50, &mut rng) {
                counts[i] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let share = |i: usize| counts[i] as f64 / total as f64;
        assert!((share(2) - 0.8).abs() < 0.02, "{counts:?}");
        assert!((share(0) - 0.1).abs() < 0.02, "{counts:?}");
        assert!(share(3) < 0.005, "{counts:?}");
    }

    #[test]
    fn heavier_samples_steer_the_fit() {
        // Two clusters at x=0 with conflicting targets; weight decides.
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![f64::from(i % 2)]).collect();
        let y: Vec<f64> = (0..40)
            .map(|i| if i % 2 == 0 { 10.0 } else { 50.0 })
            .collect();
        let mut w = vec![1.0; 40];
        for (i, wi) in w.iter_mut().enumerate() {
            if i % 2 == 0 {
                *wi = 20.0;
            }
        }
        let model = train_forest(&x, &y, &w, 3);
        // Bootstrap is dominated by the heavy cluster, so a probe between
        // the clusters should land near its target.
        let p = model.predict(&[0.0]);
        assert!((p - 10.0).abs() < 2.0, "{p}");
    }
}
