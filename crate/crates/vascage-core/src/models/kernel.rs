//! Kernel ridge regression with a Gaussian kernel. Features are z-scored
//! internally (the statistics ride along in the artifact), targets are
//! centered on their weighted mean, and sample weights enter as per-sample
//! regularization: heavier samples are regularized less, so the fit hews
//! closer to them.
//!
//! The bandwidth starts from the median pairwise squared distance, but the
//! production entry point [`train_krr_auto`] refines both it and the ridge
//! strength by exact leave-one-out cross-validation. With many mutually
//! redundant feature columns the median heuristic lands far above the scale
//! of the direction that actually carries the target, and the resulting
//! oversmoothing flattens predictions toward the cohort mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ranking::{standardize_columns, Standardization};

use super::ModelError;

/// Ridge strength used when the caller fixes it by hand.
pub const DEFAULT_LAMBDA: f64 = 1e-2;
/// Smallest usable kernel bandwidth.
pub const MIN_GAMMA: f64 = 1e-12;
/// Bandwidth candidates for [`train_krr_auto`], as multiples of the median
/// pairwise squared distance.
pub const GAMMA_SCALES: [f64; 7] = [
    1.0 / 32.0,
    1.0 / 16.0,
    1.0 / 8.0,
    1.0 / 4.0,
    1.0 / 2.0,
    1.0,
    2.0,
];
/// Ridge candidates for [`train_krr_auto`].
pub const LAMBDA_GRID: [f64; 3] = [1e-3, 1e-2, 1e-1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrModel {
    pub standardization: Standardization,
    /// Gaussian bandwidth: k(a,b) = exp(−‖a−b‖² / gamma).
    pub gamma: f64,
    pub lambda: f64,
    /// Weighted mean of the training targets, added back at prediction.
    pub y_mean: f64,
    /// Z-scored training rows.
    pub train_x: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lower median by nearest rank; deterministic for even counts.
fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

fn apply_standardization(st: &Standardization, row: &[f64]) -> Vec<f64> {
    row.iter()
        .enumerate()
        .map(|(j, v)| {
            if st.constant[j] {
                0.0
            } else {
                (v - st.means[j]) / st.stds[j]
            }
        })
        .collect()
}

impl KrrModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let z = apply_standardization(&self.standardization, row);
        self.y_mean
            + self
                .train_x
                .iter()
                .zip(&self.alpha)
                .map(|(xi, a)| a * (-sq_dist(&z, xi) / self.gamma).exp())
                .sum::<f64>()
    }
}

/// Shared preprocessing: z-scored rows, pairwise squared distances, the
/// median distance, and centered targets.
struct Prepared {
    standardization: Standardization,
    z: Vec<Vec<f64>>,
    dist: DMatrix<f64>,
    median_dist: f64,
    y_mean: f64,
    y_centered: DVector<f64>,
}

fn prepare(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<Prepared, ModelError> {
    if y.iter().all(|&v| v == y[0]) {
        return Err(ModelError::Degenerate(
            "constant target: every training age is equal".into(),
        ));
    }
    let (z, standardization) =
        standardize_columns(x).map_err(|e| ModelError::Degenerate(e.to_string()))?;
    let n = z.len();
    let mut dist = DMatrix::zeros(n, n);
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(&z[i], &z[j]);
            dist[(i, j)] = d;
            dist[(j, i)] = d;
            upper.push(d);
        }
    }
    let median_dist = if upper.is_empty() {
        MIN_GAMMA
    } else {
        median(&mut upper).max(MIN_GAMMA)
    };
    let w_sum: f64 = w.iter().sum();
    let y_mean = y.iter().zip(w).map(|(yi, wi)| yi * wi).sum::<f64>() / w_sum;
    let y_centered = DVector::from_iterator(n, y.iter().map(|yi| yi - y_mean));
    Ok(Prepared {
        standardization,
        z,
        dist,
        median_dist,
        y_mean,
        y_centered,
    })
}

/// The regularized kernel system K + λ·diag(1/wᵢ).
fn system(p: &Prepared, w: &[f64], gamma: f64, lambda: f64) -> DMatrix<f64> {
    let n = p.z.len();
    DMatrix::from_fn(n, n, |i, j| {
        let base = (-p.dist[(i, j)] / gamma).exp();
        if i == j {
            base + lambda / w[i]
        } else {
            base
        }
    })
}

fn fit_prepared(
    p: Prepared,
    w: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<KrrModel, ModelError> {
    let m = system(&p, w, gamma, lambda);
    let alpha = m
        .cholesky()
        .ok_or_else(|| ModelError::Degenerate("kernel system not positive definite".into()))?
        .solve(&p.y_centered);
    Ok(KrrModel {
        standardization: p.standardization,
        gamma,
        lambda,
        y_mean: p.y_mean,
        train_x: p.z,
        alpha: alpha.iter().cloned().collect(),
    })
}

/// Fit with the caller's ridge strength and the plain median-heuristic
/// bandwidth; solves (K + λ·diag(1/wᵢ)) α = y − ȳ by Cholesky.
pub fn train_krr(
    x: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    lambda: f64,
) -> Result<KrrModel, ModelError> {
    let p = prepare(x, y, w)?;
    let gamma = p.median_dist;
    fit_prepared(p, w, gamma, lambda)
}

/// Fit with bandwidth and ridge strength chosen by exact leave-one-out
/// cross-validation over [`GAMMA_SCALES`] × [`LAMBDA_GRID`].
///
/// For a fixed system M = K + λ·diag(1/wᵢ) the leave-one-out residual of
/// sample i is αᵢ / (M⁻¹)ᵢᵢ, so every candidate is scored with one
/// factorization instead of n refits. The score is the weighted mean of
/// squared leave-one-out residuals; the first candidate in grid order wins
/// ties, which keeps the choice deterministic.
pub fn train_krr_auto(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<KrrModel, ModelError> {
    let p = prepare(x, y, w)?;
    let w_sum: f64 = w.iter().sum();
    let mut best: Option<(f64, f64, f64)> = None;
    for scale in GAMMA_SCALES {
        let gamma = (scale * p.median_dist).max(MIN_GAMMA);
        for lambda in LAMBDA_GRID {
            let m = system(&p, w, gamma, lambda);
            let Some(chol) = m.cholesky() else { continue };
            let inv = chol.inverse();
            let alpha = &inv * &p.y_centered;
            let score = (0..p.z.len())
                .map(|i| {
                    let loo = alpha[i] / inv[(i, i)];
                    w[i] * loo * loo
                })
                .sum::<f64>()
                / w_sum;
            if best.is_none_or(|(s, _, _)| score < s) {
                best = Some((score, gamma, lambda));
            }
        }
    }
    let (_, gamma, lambda) = best
        .ok_or_else(|| ModelError::Degenerate("no kernel candidate was positive definite".into()))?;
    fit_prepared(p, w, gamma, lambda)
}
