//! Time-domain heart-rate-variability metrics over an entry's NN
//! intervals. All inputs are milliseconds; spreads use the n−1
//! denominator.

use thiserror::Error;

/// Minimum number of NN intervals worth summarizing.
pub const MIN_INTERVALS: usize = 10;

/// Column order used everywhere the metrics are written out.
pub const HRV_NAMES: [&str; 8] = [
    "MeanNN", "SDNN", "RMSSD", "SDSD", "pNN50", "pNN20", "CVNN", "MeanHR",
];

#[derive(Debug, Error)]
pub enum HrvError {
    #[error("TooFewIntervals: {0}, need ≥ {MIN_INTERVALS}")]
    TooFewIntervals(usize),
}

/// The eight metrics, in [`HRV_NAMES`] order via [`HrvMetrics::values`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrvMetrics {
    /// Mean NN interval, ms.
    pub mean_nn: f64,
    /// Standard deviation of NN intervals, ms.
    pub sdnn: f64,
    /// Root mean square of successive differences, ms.
    pub rmssd: f64,
    /// Standard deviation of successive differences, ms.
    pub sdsd: f64,
    /// Fraction of successive differences larger than 50 ms, in [0, 1].
    pub pnn50: f64,
    /// Fraction of successive differences larger than 20 ms, in [0, 1].
    pub pnn20: f64,
    /// SDNN relative to MeanNN, dimensionless.
    pub cvnn: f64,
    /// Mean heart rate, beats per minute.
    pub mean_hr: f64,
}

impl HrvMetrics {
    pub fn values(&self) -> [f64; 8] {
        [
            self.mean_nn,
            self.sdnn,
            self.rmssd,
            self.sdsd,
            self.pnn50,
            self.pnn20,
            self.cvnn,
            self.mean_hr,
        ]
    }
}

fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let ss = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / (x.len() - 1) as f64).sqrt()
}

/// Compute the metrics from NN intervals in milliseconds.
pub fn hrv_metrics(nn_ms: &[f64]) -> Result<HrvMetrics, HrvError> {
    if nn_ms.len() < MIN_INTERVALS {
        return Err(HrvError::TooFewIntervals(nn_ms.len()));
    }
    let n = nn_ms.len() as f64;
    let mean_nn = nn_ms.iter().sum::<f64>() / n;
    let sdnn = sample_std(nn_ms);
    let diffs: Vec<f64> = nn_ms.windows(2).map(|w| w[1] - w[0]).collect();
    let rmssd = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
    let sdsd = sample_std(&diffs);
    let over =
        |lim: f64| diffs.iter().filter(|d| d.abs() > lim).count() as f64 / diffs.len() as f64;
    Ok(HrvMetrics {
        mean_nn,
        sdnn,
        rmssd,
        sdsd,
        pnn50: over(50.0),
        pnn20: over(20.0),
        cvnn: sdnn / mean_nn,
        mean_hr: 60_000.0 / mean_nn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_intervals_have_zero_variability() {
        let m = hrv_metrics(&vec![800.0; 12]).unwrap();
        assert_eq!(m.mean_nn, 800.0);
        assert_eq!(m.sdnn, 0.0);
        assert_eq!(m.rmssd, 0.0);
        assert_eq!(m.sdsd, 0.0);
        assert_eq!(m.pnn50, 0.0);
        assert_eq!(m.pnn20, 0.0);
        assert_eq!(m.cvnn, 0.0);
        assert_eq!(m.mean_hr, 75.0);
    }

    #[test]
    fn hand_computed_example() {
        // Ten intervals alternating 780 and 830: diffs are ±50, which the
        // strict comparison keeps out of pNN50 but not pNN20.
        let nn: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 780.0 } else { 830.0 })
            .collect();
        let m = hrv_metrics(&nn).unwrap();
        assert!((m.mean_nn - 805.0).abs() < 1e-12);
        assert!((m.rmssd - 50.0).abs() < 1e-12);
        assert_eq!(m.pnn50, 0.0);
        assert_eq!(m.pnn20, 1.0);
        // SDNN with n−1: sqrt(10·25² / 9).
        assert!((m.sdnn - (6250.0f64 / 9.0).sqrt()).abs() < 1e-12);
        assert!((m.mean_hr - 60_000.0 / 805.0).abs() < 1e-12);
    }

    #[test]
    fn strict_threshold_excludes_exact_50ms() {
        let mut nn = vec![800.0; 10];
        nn.push(850.0); // one +50 ms jump
        nn.push(901.0); // one +51 ms jump
        let m = hrv_metrics(&nn).unwrap();
        assert!((m.pnn50 - 1.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_intervals_is_an_error() {
        assert!(matches!(
            hrv_metrics(&vec![800.0; 9]),
            Err(HrvError::TooFewIntervals(9))
        ));
    }

    #[test]
    fn matches_direct_recomputation_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(10..200);
            let nn: Vec<f64> = (0..n).map(|_| rng.random_range(500.0..1200.0)).collect();
            let m = hrv_metrics(&nn).unwrap();

            // Oracle: recompute every metric from its definition, written
            // out element by element.
            let mean = nn.iter().sum::<f64>() / n as f64;
            let mut ss = 0.0;
            for &v in &nn {
                ss += (v - mean) * (v - mean);
            }
            let sdnn = (ss / (n - 1) as f64).sqrt();
            let mut sum_sq_diff = 0.0;
            let mut diffs = Vec::new();
            for i in 1..nn.len() {
                let d = nn[i] - nn[i - 1];
                diffs.push(d);
                sum_sq_diff += d * d;
            }
            let rmssd = (sum_sq_diff / diffs.len() as f64).sqrt();
            let dmean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let mut dss = 0.0;
            for &d in &diffs {
                dss += (d - dmean) * (d - dmean);
            }
            let sdsd = (dss / (diffs.len() - 1) as f64).sqrt();
            let count50 = diffs.iter().filter(|d| d.abs() > 50.0).count();
            let count20 = diffs.iter().filter(|d| d.abs() > 20.0).count();

            assert!((m.mean_nn - mean).abs() < 1e-9);
            assert!((m.sdnn - sdnn).abs() < 1e-9);
            assert!((m.rmssd - rmssd).abs() < 1e-9);
            assert!((m.sdsd - sdsd).abs() < 1e-9);
            assert!((m.pnn50 - count50 as f64 / diffs.len() as f64).abs() < 1e-9);
            assert!((m.pnn20 - count20 as f64 / diffs.len() as f64).abs() < 1e-9);
            assert!((m.cvnn - sdnn / mean).abs() < 1e-12);
            assert!((m.mean_hr - 60_000.0 / mean).abs() < 1e-9);
            assert!(m.pnn50 <= m.pnn20 && m.pnn20 <= 1.0);
        }
    }
}
