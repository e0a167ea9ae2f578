//! Feature evaluation on one dominant pulse. All time quantities live on
//! the true beat clock: grid index g maps to g·duration/400 seconds.
//! A feature evaluates to `None` when landmark detection failed, a needed
//! QRS reference is absent, or a ratio denominator is too small to trust.

use super::grammar::{Delay, Feature, Landmark};
use super::landmarks::{detect_on_smoothed, LandmarkSet, SMOOTH_WINDOW};
use crate::beats::moving_average;
use crate::pulse::{DominantPulse, PULSE_GRID};

/// Smallest denominator (seconds) accepted in a delay ratio or slope.
pub const MIN_RATIO_DENOM_S: f64 = 1e-6;

/// Everything needed to evaluate manifest features against one pulse.
#[derive(Debug, Clone)]
pub struct PulseAnalysis {
    /// Detected landmarks, or `None` when the pulse was undetectable; an
    /// undetectable pulse invalidates every feature of this side.
    pub landmarks: Option<LandmarkSet>,
    pub smoothed: Vec<f64>,
    pub min_smoothed: f64,
    /// Curvature magnitude per grid point; entries 0 and 399 are unusable
    /// and landmark lookups clamp into [1, 398].
    pub curvature: Vec<f64>,
    /// Mean absolute curvature over the interior grid.
    pub mac: f64,
    /// Onset-to-onset beat duration, seconds.
    pub duration: f64,
}

/// Smooth, locate landmarks, and precompute curvature for one pulse.
///
/// `qrs_reference_time_s` is the governing R-peak time relative to beat
/// onset (zero or negative), `None` without an ECG channel.
pub fn analyze_pulse(
    samples: &[f64],
    duration: f64,
    qrs_reference_time_s: Option<f64>,
) -> PulseAnalysis {
    assert_eq!(samples.len(), PULSE_GRID);
    let smoothed = moving_average(samples, SMOOTH_WINDOW);
    let landmarks = detect_on_smoothed(&smoothed, duration, qrs_reference_time_s).ok();
    let min_smoothed = smoothed.iter().cloned().fold(f64::INFINITY, f64::min);

    let dt = duration / PULSE_GRID as f64;
    let mut curvature = vec![0.0; PULSE_GRID];
    let mut total = 0.0;
    for i in 1..PULSE_GRID - 1 {
        let d1 = (smoothed[i + 1] - smoothed[i - 1]) / (2.0 * dt);
        let d2 = (smoothed[i + 1] - 2.0 * smoothed[i] + smoothed[i - 1]) / (dt * dt);
        curvature[i] = d2.abs() / (1.0 + d1 * d1).powf(1.5);
        total += curvature[i];
    }
    let mac = total / (PULSE_GRID - 2) as f64;

    PulseAnalysis {
        landmarks,
        smoothed,
        min_smoothed,
        curvature,
        mac,
        duration,
    }
}

/// Analyze the averaged dominant pulse of an entry.
pub fn analyze_dominant_pulse(dp: &DominantPulse, qrs_reference_time_s: Option<f64>) -> PulseAnalysis {
    analyze_pulse(&dp.samples, dp.mean_beat_duration, qrs_reference_time_s)
}

impl PulseAnalysis {
    /// Delay in seconds: `LT` runs from the governing R peak to v1, a
    /// latency from its first landmark to its second.
    fn delay_value(&self, lm: &LandmarkSet, d: Delay) -> Option<f64> {
        match d {
            Delay::Lt => lm.lt_s(),
            Delay::Latency(a, b) => Some(lm.time_s(b) - lm.time_s(a)),
        }
    }

    /// Rising slope into peak k: amplitude gain from the preceding valley
    /// divided by the time taken; invalid for coincident landmarks.
    fn slope(&self, lm: &LandmarkSet, k: u8) -> Option<f64> {
        let peak = Landmark::ALL[2 * k as usize - 1];
        let valley = Landmark::ALL[2 * k as usize - 2];
        let rise = lm.amplitude(peak) - lm.amplitude(valley);
        let dt = lm.time_s(peak) - lm.time_s(valley);
        if dt.abs() < MIN_RATIO_DENOM_S {
            return None;
        }
        Some(rise / dt)
    }

    fn curvature_at(&self, lm: &LandmarkSet, l: Landmark) -> f64 {
        self.curvature[lm.grid_index(l).clamp(1, PULSE_GRID - 2)]
    }
}

/// Evaluate one feature; `None` marks it invalid for this pulse.
pub fn eval_feature(f: Feature, a: &PulseAnalysis) -> Option<f64> {
    let lm = a.landmarks.as_ref()?;
    match f {
        Feature::Delay(d) => a.delay_value(lm, d),
        Feature::Amplitude(l) => Some(lm.amplitude(l) - a.min_smoothed),
        Feature::Curvature(l) => Some(a.curvature_at(lm, l)),
        Feature::Slope(k) => a.slope(lm, k),
        Feature::Mac => Some(a.mac),
        Feature::Ratio(num, den) => {
            let d = a.delay_value(lm, den)?;
            if d.abs() < MIN_RATIO_DENOM_S {
                return None;
            }
            Some(a.delay_value(lm, num)? / d)
        }
    }
}
