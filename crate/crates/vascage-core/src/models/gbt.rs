//! Gradient-boosted shallow trees under weighted squared error: start at
//! the weighted mean, then repeatedly fit a depth-limited tree to the
//! residuals and step toward it by the learning rate. The recorded
//! training-loss curve never increases, because every stage's tree fit
//! cannot do worse than a zero-everywhere correction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit, Tree, TreeConfig};

pub const N_STAGES: usize = 500;
pub const MAX_DEPTH: usize = 3;
pub const LEARNING_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    /// Weighted mean of the targets; prediction starts here.
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Weighted mean squared training error after each stage.
    pub train_loss: Vec<f64>,
}

impl GbtModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.base
            + self.learning_rate
                * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }
}

/// Train the boosted ensemble on pre-selected feature columns.
pub fn train_gbt(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> GbtModel {
    let n = x.len();
    let idx: Vec<usize> = (0..n).collect();
    let sw: f64 = w.iter().sum();
    let base = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum::<f64>() / sw;
    let cfg = TreeConfig {
        max_depth: MAX_DEPTH,
        mtry: None,
    };
    // The split search is deterministic without feature subsampling; the
    // stream exists only to satisfy the fitting interface.
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut current: Vec<f64> = vec![base; n];
    let mut trees = Vec::with_capacity(N_STAGES);
    let mut train_loss = Vec::with_capacity(N_STAGES);
    for _ in 0..N_STAGES {
        let residual: Vec<f64> = y.iter().zip(&current).map(|(yi, f)| yi - f).collect();
        let tree = fit(x, &residual, w, &idx, cfg, &mut rng);
        for (f, r) in current.iter_mut().zip(x) {
            *f += LEARNING_RATE * tree.predict(r);
        }
        let loss = w
            .iter()
            .zip(y)
            .zip(&current)
            .map(|((wi, yi), f)| wi * (yi - f) * (yi - f))
            .sum::<f64>()
            / sw;
        trees.push(tree);
        train_loss.push(loss);
    }
    GbtModel {
        base,
        learning_rate: LEARNING_RATE,
        trees,
        train_loss,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.random_range(0.0..10.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| (r[0] * 0.8).sin() * 5.0 + r[1] + rng.random_range(-0.2..0.2))
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        (x, y, w)
    }

    #[test]
    fn training_loss_never_increases() {
        let (x, y, w) = toy_data(80, 4);
        let model = train_gbt(&x, &y, &w);
        assert_eq!(model.train_loss.len(), N_STAGES);
        for win in model.train_loss.windows(2) {
            assert!(win[1] <= win[0] + 1e-9, "{} -> {}", win[0], win[1]);
        }
        let first = model.train_loss[0];
        let last = *model.train_loss.last().unwrap();
        assert!(last < first * 0.2, "no real progress: {first} -> {last}");
    }

    #[test]
    fn is_deterministic() {
        let (x, y, w) = toy_data(40, 5);
        assert_eq!(train_gbt(&x, &y, &w), train_gbt(&x, &y, &w));
    }

    #[test]
    fn constant_target_fits_exactly_at_the_base() {
        let x: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64]).collect();
        let y = vec![42.0; 25];
        let w = vec![1.0; 25];
        let model = train_gbt(&x, &y, &w);
        assert_eq!(model.base, 42.0);
        assert!(model.train_loss.iter().all(|&l| l < 1e-18));
        assert!((model.predict(&[-3.0]) - 42.0).abs() < 1e-9);
    }

    #[test]
    fn fits_a_smooth_signal_closely() {
        let (x, y, w) = toy_data(120, 6);
        let model = train_gbt(&x, &y, &w);
        let sw: f64 = w.iter().sum();
        let mean: f64 = w.iter().zip(&y).map(|(wi, yi)| wi * yi).sum::<f64>() / sw;
        let mut sse = 0.0;
        let mut var = 0.0;
        for ((r, &t), &wi) in x.iter().zip(&y).zip(&w) {
            sse += wi * (model.predict(r) - t).powi(2);
            var += wi * (t - mean).powi(2);
        }
        assert!(sse / var < 0.05, "R^2 {}", 1.0 - sse / var);
    }

    #[test]
    fn stored_loss_matches_recomputation_from_the_model() {
        let (x, y, w) = toy_data(30, 8);
        let model = train_gbt(&x, &y, &w);
        let sw: f64 = w.iter().sum();
        let loss: f64 = x
            .iter()
            .zip(&y)
            .zip(&w)
            .map(|((r, yi), wi)| wi * (yi - model.predict(r)).powi(2))
            .sum::<f64>()
            / sw;
        let stored = *model.train_loss.last().unwrap();
        assert!((loss - stored).abs() < 1e-6, "{loss} vs {stored}");
    }
}
