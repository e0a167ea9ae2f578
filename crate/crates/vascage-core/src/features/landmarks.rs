//! Landmark detection on a dominant pulse: smooth, collect prominent local
//! maxima, and assign them together with the interleaved minima to
//! (v1, p1, v2, p2, v3, p3) in time order starting at the pulse foot.
//!
//! A pulse that exposes only two peak candidates is still usable: the more
//! prominent candidate also fills the adjacent missing peak role, producing
//! coincident landmarks. Fewer than two peaks means detection fails and the
//! entry is later rejected by the validity check.

use thiserror::Error;

use super::grammar::Landmark;
use crate::beats::moving_average;
use crate::pulse::DominantPulse;

/// Smoothing window in samples, 25 ms at the 400 Hz analysis rate rounded
/// up to an odd length. Fixed in grid samples so that stretching the time
/// axis never changes which samples become landmarks.
pub const SMOOTH_WINDOW: usize = 11;
/// A peak must rise above its saddle by this fraction of the pulse range.
pub const PROMINENCE_FRACTION: f64 = 0.02;
/// The foot valley v1 is searched within this leading fraction of the beat.
pub const FOOT_SEARCH_FRACTION: f64 = 0.25;

/// Landmark detection failure.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LandmarkError {
    /// The smoothed pulse exposed fewer than two prominent local maxima.
    #[error("landmarks undetectable: {peaks} peak candidate(s), need at least 2")]
    Undetectable { peaks: usize },
}

/// One detected landmark on the normalized beat grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkPoint {
    /// Position on the 400-sample pulse grid.
    pub grid_index: usize,
    /// Time from beat onset in seconds on the true-duration beat clock.
    pub time_s: f64,
    /// Smoothed waveform value at the landmark, cm/s.
    pub amplitude: f64,
}

/// The six landmarks in time order plus the governing R-peak time.
///
/// Ordering invariant: `time_s` is non-decreasing across
/// v1, p1, v2, p2, v3, p3, with equal times only for coincident
/// assignments made by the degenerate two-peak rule.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: [LandmarkPoint; 6],
    /// Time of the R peak governing this beat, relative to beat onset and
    /// therefore zero or negative. `None` when no ECG channel was present.
    pub qrs_reference_time_s: Option<f64>,
}

impl LandmarkSet {
    /// The detected point for a landmark role.
    pub fn point(&self, l: Landmark) -> LandmarkPoint {
        self.points[l.index()]
    }

    /// Grid index of a landmark.
    pub fn grid_index(&self, l: Landmark) -> usize {
        self.points[l.index()].grid_index
    }

    /// Time of a landmark from beat onset, seconds.
    pub fn time_s(&self, l: Landmark) -> f64 {
        self.points[l.index()].time_s
    }

    /// Smoothed amplitude at a landmark, cm/s.
    pub fn amplitude(&self, l: Landmark) -> f64 {
        self.points[l.index()].amplitude
    }

    /// Latency from the governing R peak to the pulse onset valley v1,
    /// or `None` when the recording had no ECG channel.
    pub fn lt_s(&self) -> Option<f64> {
        self.qrs_reference_time_s
            .map(|q| self.time_s(Landmark::V1) - q)
    }
}

/// Topographic prominence of the local maximum at `i`: height above the
/// higher of the two saddles toward the nearest taller point (or the
/// signal edge).
fn prominence(x: &[f64], i: usize) -> f64 {
    let mut left = x[i];
    let mut j = i;
    while j > 0 {
        j -= 1;
        if x[j] > x[i] {
            break;
        }
        left = left.min(x[j]);
    }
    let mut right = x[i];
    let mut j = i;
    while j + 1 < x.len() {
        j += 1;
        if x[j] > x[i] {
            break;
        }
        right = right.min(x[j]);
    }
    x[i] - left.max(right)
}

fn argmin(x: &[f64], range: std::ops::Range<usize>) -> usize {
    range
        .reduce(|best, i| if x[i] < x[best] { i } else { best })
        .expect("argmin over a non-empty range")
}

/// Detect landmarks on a dominant pulse, smoothing internally.
///
/// `qrs_reference_time_s` is the time of the R peak governing the beat,
/// relative to beat onset (zero or negative); pass `None` without ECG.
pub fn detect_landmarks(
    dp: &DominantPulse,
    qrs_reference_time_s: Option<f64>,
) -> Result<LandmarkSet, LandmarkError> {
    let smoothed = moving_average(&dp.samples, SMOOTH_WINDOW);
    detect_on_smoothed(&smoothed, dp.mean_beat_duration, qrs_reference_time_s)
}

/// Detect landmarks on an already-smoothed pulse of known true duration.
pub(crate) fn detect_on_smoothed(
    smoothed: &[f64],
    duration_s: f64,
    qrs_reference_time_s: Option<f64>,
) -> Result<LandmarkSet, LandmarkError> {
    let n = smoothed.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in smoothed {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let floor = PROMINENCE_FRACTION * (hi - lo);

    // Local maxima; plateaus count once at their first sample. Keep the
    // three most prominent candidates, then restore time order.
    let mut peaks: Vec<(usize, f64)> = (1..n - 1)
        .filter(|&i| smoothed[i] > smoothed[i - 1] && smoothed[i] >= smoothed[i + 1])
        .map(|i| (i, prominence(smoothed, i)))
        .filter(|&(_, p)| p >= floor)
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    peaks.truncate(3);
    peaks.sort_by_key(|&(i, _)| i);

    let [p1, p2, p3] = match peaks.as_slice() {
        [] | [_] => return Err(LandmarkError::Undetectable { peaks: peaks.len() }),
        // Degenerate rule: the more prominent of the two candidates also
        // fills the middle peak role, so all three roles stay populated
        // and the ordering invariant holds with coincident landmarks.
        [(a, pa), (b, pb)] => {
            if pa >= pb {
                [*a, *a, *b]
            } else {
                [*a, *b, *b]
            }
        }
        [(a, _), (b, _), (c, _)] => [*a, *b, *c],
        _ => unreachable!("truncated to three candidates"),
    };

    // Valleys: the foot v1 is the minimum over the leading quarter of the
    // beat (capped at p1 to preserve ordering); v2 and v3 are the minima
    // between consecutive peaks, collapsing onto coincident peaks.
    let foot_end = (p1 + 1).min(((n as f64 * FOOT_SEARCH_FRACTION) as usize).max(1));
    let v1 = argmin(smoothed, 0..foot_end);
    let v2 = if p1 == p2 {
        p1
    } else {
        argmin(smoothed, p1 + 1..p2)
    };
    let v3 = if p2 == p3 {
        p2
    } else {
        argmin(smoothed, p2 + 1..p3)
    };

    let point = |i: usize| LandmarkPoint {
        grid_index: i,
        time_s: i as f64 * duration_s / n as f64,
        amplitude: smoothed[i],
    };
    Ok(LandmarkSet {
        points: [v1, p1, v2, p2, v3, p3].map(point),
        qrs_reference_time_s,
    })
}
