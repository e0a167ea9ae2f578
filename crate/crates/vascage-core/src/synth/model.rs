//! Analytic pulse model: three Gaussian bumps on a baseline, with aging
//! encoded as falling systolic amplitude, rising secondary-peak ratio, and a
//! drifting systolic center. Landmark positions have closed-form derivatives,
//! so ground truth comes from root-finding the analytic slope, not from the
//! detection code under test.

use serde::{Deserialize, Serialize};

/// Reference beat duration the template is defined on, seconds. Synthesized
/// beats time-scale this template to their own RR interval.
pub const T_REF: f64 = 0.8;

/// Landmark order used throughout: v1, p1, v2, p2, v3, p3.
pub const LANDMARK_COUNT: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseModelParams {
    /// Bump amplitudes A1..A3, cm/s.
    pub amplitudes: [f64; 3],
    /// Bump centers t1 < t2 < t3 on the reference clock, seconds.
    pub centers: [f64; 3],
    /// Bump widths, seconds; each bump is a Gaussian with σ = width / 2 so a
    /// bump spans roughly ±width around its center.
    pub widths: [f64; 3],
    /// Diastolic floor, cm/s.
    pub baseline: f64,
}

/// Map an effective age to pulse shape parameters.
///
/// The constants are synthetic by design: amplitude declines and the
/// secondary-to-systolic ratio grows with age, monotonically, so that a
/// pipeline recovering age from morphology has a well-posed target.
pub fn pulse_params(effective_age: f64) -> PulseModelParams {
    let e = effective_age;
    let a1 = (80.0 * (1.0 - 0.005 * (e - 20.0))).max(30.0);
    let a2 = a1 * (0.45 + 0.004 * (e - 20.0));
    let a3 = a1 * 0.3;
    let t1 = 0.10 + 0.0005 * (e - 20.0);
    PulseModelParams {
        amplitudes: [a1, a2, a3],
        centers: [t1, t1 + 0.12, t1 + 0.26],
        widths: [0.04, 0.06, 0.08],
        baseline: 20.0,
    }
}

impl PulseModelParams {
    fn sigma(&self, i: usize) -> f64 {
        self.widths[i] / 2.0
    }

    /// Template value at reference-clock time `u`, cm/s.
    pub fn value(&self, u: f64) -> f64 {
        let mut v = self.baseline;
        for i in 0..3 {
            let s = self.sigma(i);
            let d = u - self.centers[i];
            v += self.amplitudes[i] * (-d * d / (2.0 * s * s)).exp();
        }
        v
    }

    /// First derivative of the template, cm/s per s.
    pub fn deriv(&self, u: f64) -> f64 {
        let mut v = 0.0;
        for i in 0..3 {
            let s = self.sigma(i);
            let d = u - self.centers[i];
            v += -self.amplitudes[i] * d / (s * s) * (-d * d / (2.0 * s * s)).exp();
        }
        v
    }

    /// Second derivative of the template.
    pub fn second_deriv(&self, u: f64) -> f64 {
        let mut v = 0.0;
        for i in 0..3 {
            let s = self.sigma(i);
            let d = u - self.centers[i];
            let s2 = s * s;
            v += self.amplitudes[i] * (d * d / (s2 * s2) - 1.0 / s2)
                * (-d * d / (2.0 * s2)).exp();
        }
        v
    }

    /// Value of a beat of duration `t_beat` at local time `t`, i.e. the
    /// template time-scaled so the whole reference shape fits the beat.
    pub fn beat_value(&self, t: f64, t_beat: f64) -> f64 {
        self.value(t / t_beat * T_REF)
    }
}

/// Exact landmark positions of a pulse template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkTruth {
    /// Positions as fractions of the beat, order v1, p1, v2, p2, v3, p3.
    pub fractions: [f64; LANDMARK_COUNT],
    /// Positions on the reference clock, seconds.
    pub times_ref: [f64; LANDMARK_COUNT],
    /// Template values at the landmarks, cm/s.
    pub amplitudes: [f64; LANDMARK_COUNT],
}

/// Bisect `f` on [a, b] assuming exactly one sign change; returns the root to
/// machine precision. Deterministic, no derivative step-size choices.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> Option<f64> {
    let (fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < f64::EPSILON * a.abs().max(b.abs()).max(1.0) {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Solve the template's stationary points: three maxima near the bump
/// centers, the two interior minima between them, and the foot at u = 0
/// (the template rises from the fold, so the first-quarter minimum sits
/// exactly at the beat onset).
pub fn landmark_truth(params: &PulseModelParams) -> Option<LandmarkTruth> {
    let d = |u: f64| params.deriv(u);
    let mut peaks = [0.0f64; 3];
    for i in 0..3 {
        let s = params.sigma(i);
        let p = bisect(d, params.centers[i] - s, params.centers[i] + s)?;
        if params.second_deriv(p) >= 0.0 {
            return None;
        }
        peaks[i] = p;
    }
    if !(peaks[0] < peaks[1] && peaks[1] < peaks[2]) {
        return None;
    }
    let eps = 1e-9;
    let v2 = bisect(d, peaks[0] + eps, peaks[1] - eps)?;
    let v3 = bisect(d, peaks[1] + eps, peaks[2] - eps)?;
    if params.second_deriv(v2) <= 0.0 || params.second_deriv(v3) <= 0.0 {
        return None;
    }
    let times = [0.0, peaks[0], v2, peaks[1], v3, peaks[2]];
    Some(LandmarkTruth {
        fractions: times.map(|t| t / T_REF),
        times_ref: times,
        amplitudes: times.map(|t| params.value(t)),
    })
}
