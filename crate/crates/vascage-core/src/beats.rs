//! Beat detection: ECG R-peaks (Pan-Tompkins style), cleaned R-R intervals,
//! and CBFV pulse-onset detection for segmenting entries with or without an
//! ECG channel.

use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, BeatError>;

#[derive(Debug, Error)]
pub enum BeatError {
    #[error("SignalTooShort: {got} samples, need {need}")]
    SignalTooShort { got: usize, need: usize },
    #[error("TooFewPeaks: {0} R-peaks, need at least 2")]
    TooFewPeaks(usize),
    #[error("NoBeatsFound")]
    NoBeatsFound,
}

/// Detection results for one recording, serializable for `--dump-beats`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeatAnnotations {
    pub r_peaks: Option<Vec<usize>>,
    pub rr_intervals_ms: Option<Vec<f64>>,
    pub pulse_onsets_left: Vec<usize>,
    pub pulse_onsets_right: Vec<usize>,
}

/// Moving average with edge truncation (window shrinks at the borders).
/// `w` is forced odd so the filter stays zero-phase.
pub(crate) fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1) | 1;
    let h = w / 2;
    let n = x.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Nearest-rank quantile of a copy of `x`; `q` in [0, 1].
fn quantile(x: &[f64], q: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

fn bandpass_5_15(x: &[f64], fs: f64) -> Vec<f64> {
    let f0 = (5.0f64 * 15.0).sqrt();
    let q = f0 / 10.0;
    let w0 = 2.0 * PI * f0 / fs;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let b0 = alpha / a0;
    let b2 = -alpha / a0;
    let a1 = -2.0 * w0.cos() / a0;
    let a2 = (1.0 - alpha) / a0;
    let mut y = vec![0.0; x.len()];
    for n in 0..x.len() {
        let x2 = if n >= 2 { x[n - 2] } else { 0.0 };
        let y1 = if n >= 1 { y[n - 1] } else { 0.0 };
        let y2 = if n >= 2 { y[n - 2] } else { 0.0 };
        y[n] = b0 * x[n] + b2 * x2 - a1 * y1 - a2 * y2;
    }
    y
}

/// Detect R-peaks: band-pass 5–15 Hz, five-point derivative, squaring,
/// 150 ms moving-window integration, then adaptive dual thresholds with a
/// 200 ms refractory and a missed-beat searchback. Every threshold derives
/// from the signal itself, so detection is invariant to amplitude scaling.
pub fn detect_qrs(ecg: &[f64], fs: f64) -> Result<Vec<usize>> {
    let need = (2.0 * fs) as usize;
    if ecg.len() < need {
        return Err(BeatError::SignalTooShort {
            got: ecg.len(),
            need,
        });
    }

    let bp = bandpass_5_15(ecg, fs);
    let n = bp.len();
    let mut deriv = vec![0.0; n];
    for i in 4..n {
        deriv[i] = (2.0 * bp[i] + bp[i - 1] - bp[i - 3] - 2.0 * bp[i - 4]) / 8.0;
    }
    let squared: Vec<f64> = deriv.iter().map(|d| d * d).collect();
    let w = (0.150 * fs).round() as usize;
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + squared[i];
    }
    let mwi: Vec<f64> = (0..n)
        .map(|i| (prefix[i + 1] - prefix[(i + 1).saturating_sub(w)]) / w as f64)
        .collect();

    // Candidate peaks of the integrated signal.
    let mut candidates = Vec::new();
    for i in 1..n - 1 {
        if mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1] {
            candidates.push(i);
        }
    }

    // Adaptive thresholds initialized on the first two seconds.
    let init = &mwi[..need.min(n)];
    let init_max = init.iter().cloned().fold(0.0f64, f64::max);
    let init_mean = init.iter().sum::<f64>() / init.len() as f64;
    let mut spki = 0.6 * init_max;
    let mut npki = 0.5 * init_mean;
    let mut threshold = npki + 0.25 * (spki - npki);

    let refractory = (0.2 * fs).round() as usize;
    let mut accepted: Vec<usize> = Vec::new();
    let mut rr_recent: Vec<f64> = Vec::new();
    for (ci, &i) in candidates.iter().enumerate() {
        let p = mwi[i];
        if p > threshold {
            if let Some(&last) = accepted.last() {
                if i - last < refractory {
                    if p > mwi[last] {
                        *accepted.last_mut().unwrap() = i;
                    }
                    continue;
                }
                // Searchback for a missed beat in an overlong gap.
                let rr_avg = if rr_recent.is_empty() {
                    f64::INFINITY
                } else {
                    rr_recent.iter().sum::<f64>() / rr_recent.len() as f64
                };
                if (i - last) as f64 > 1.66 * rr_avg {
                    let half = threshold * 0.5;
                    let missed = candidates[..ci]
                        .iter()
                        .rev()
                        .take_while(|&&j| j > last)
                        .filter(|&&j| j - last >= refractory && i - j >= refractory)
                        .filter(|&&j| mwi[j] > half)
                        .max_by(|&&a, &&b| mwi[a].total_cmp(&mwi[b]));
                    if let Some(&j) = missed {
                        rr_recent.push((j - last) as f64);
                        accepted.push(j);
                        spki = 0.25 * mwi[j] + 0.75 * spki;
                    }
                }
                if let Some(&prev) = accepted.last() {
                    rr_recent.push((i - prev) as f64);
                    if rr_recent.len() > 8 {
                        rr_recent.remove(0);
                    }
                }
            }
            accepted.push(i);
            spki = 0.125 * p + 0.875 * spki;
        } else {
            npki = 0.125 * p + 0.875 * npki;
        }
        threshold = npki + 0.25 * (spki - npki);
    }

    // Map each integrated-signal peak back to the raw R maximum; the MWI
    // peak trails the R by up to the window plus filter delays.
    let lag = w + 10;
    let mut r_peaks: Vec<usize> = Vec::with_capacity(accepted.len());
    for &i in &accepted {
        let lo = i.saturating_sub(lag);
        let hi = (i + 11).min(n);
        let mut best = lo;
        for j in lo..hi {
            if ecg[j] > ecg[best] {
                best = j;
            }
        }
        if r_peaks.last().is_none_or(|&p| best > p) {
            r_peaks.push(best);
        }
    }
    Ok(r_peaks)
}

/// Convert R-peaks to R-R intervals in milliseconds, dropping ectopic
/// intervals: outside [300, 2000] ms, or off by more than 20% from the
/// median of the last five accepted intervals (once five exist).
pub fn rr_intervals(r_peaks: &[usize], fs: f64) -> Result<Vec<f64>> {
    if r_peaks.len() < 2 {
        return Err(BeatError::TooFewPeaks(r_peaks.len()));
    }
    let mut out: Vec<f64> = Vec::with_capacity(r_peaks.len() - 1);
    for pair in r_peaks.windows(2) {
        let ms = (pair[1] - pair[0]) as f64 / fs * 1000.0;
        if !(300.0..=2000.0).contains(&ms) {
            continue;
        }
        if out.len() >= 5 {
            let mut last: Vec<f64> = out[out.len() - 5..].to_vec();
            last.sort_by(f64::total_cmp);
            let median = last[2];
            if (ms - median).abs() > 0.2 * median {
                continue;
            }
        }
        out.push(ms);
    }
    Ok(out)
}

/// Detect pulse feet on a CBFV channel: candidate points are maxima of the
/// smoothed derivative above a signal-derived threshold, merged under a
/// 300 ms refractory (which also swallows the secondary intra-beat
/// upstrokes), then walked back along the smoothed signal to the preceding
/// minimum.
pub fn detect_pulse_onsets(cbfv: &[f64], fs: f64) -> Result<Vec<usize>> {
    let n = cbfv.len();
    if n < (fs as usize) {
        return Err(BeatError::NoBeatsFound);
    }
    let sm = moving_average(cbfv, (0.025 * fs).round() as usize);
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (sm[i + 1] - sm[i - 1]) * fs / 2.0;
    }
    let d_max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(d_max > 0.0) {
        return Err(BeatError::NoBeatsFound);
    }
    let threshold = (0.5 * quantile(&d, 0.995)).max(0.05 * d_max);

    let refractory = (0.3 * fs).round() as usize;
    let mut upstrokes: Vec<usize> = Vec::new();
    for i in 1..n - 1 {
        if d[i] > threshold && d[i] > d[i - 1] && d[i] >= d[i + 1] {
            match upstrokes.last() {
                Some(&last) if i - last < refractory => {
                    if d[i] > d[last] {
                        *upstrokes.last_mut().unwrap() = i;
                    }
                }
                _ => upstrokes.push(i),
            }
        }
    }
    if upstrokes.is_empty() {
        return Err(BeatError::NoBeatsFound);
    }

    let s5 = moving_average(cbfv, 5);
    let mut onsets: Vec<usize> = Vec::with_capacity(upstrokes.len());
    for &u in &upstrokes {
        let mut j = u;
        while j > 0 && s5[j - 1] < s5[j] {
            j -= 1;
        }
        if onsets.last().is_none_or(|&p| j > p) {
            onsets.push(j);
        }
    }
    Ok(onsets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Group;
    use crate::synth::{synth_ecg, synth_recording, SubjectSpec};

    fn spec(noise: f64, jitter: f64, hr: f64) -> SubjectSpec {
        SubjectSpec {
            subject_id: "s0001".into(),
            group: Group::Healthy,
            age: 60.0,
            acceleration: 0.0,
            heart_rate: hr,
            rr_jitter: jitter,
            noise_level: noise,
            bmi: 24.0,
            seed: 11,
        }
    }

    #[test]
    fn qrs_on_noisy_ecg_finds_every_beat() {
        let rr = vec![800.0; 74];
        let (ecg, truth) = synth_ecg(&rr, 400.0, 10.0, 5);
        let peaks = detect_qrs(&ecg, 400.0).unwrap();
        assert_eq!(peaks.len(), 75, "got {} peaks", peaks.len());
        for (&p, &t) in peaks.iter().zip(&truth) {
            let err_ms = (p as f64 - t as f64).abs() / 400.0 * 1000.0;
            assert!(err_ms <= 5.0, "peak at {p}, truth {t}, err {err_ms} ms");
        }
    }

    #[test]
    fn qrs_zero_signal_yields_no_peaks() {
        let peaks = detect_qrs(&vec![0.0; 4000], 400.0).unwrap();
        assert!(peaks.is_empty());
    }

    #[test]
    fn qrs_repeated_template_yields_ten_peaks() {
        let rr = vec![800.0; 9];
        let (ecg, _) = synth_ecg(&rr, 400.0, 300.0, 1);
        let peaks = detect_qrs(&ecg, 400.0).unwrap();
        assert_eq!(peaks.len(), 10);
    }

    #[test]
    fn qrs_too_short_errors() {
        assert!(matches!(
            detect_qrs(&vec![0.0; 100], 400.0),
            Err(BeatError::SignalTooShort { .. })
        ));
    }

    #[test]
    fn qrs_is_amplitude_scale_invariant() {
        let rr = vec![780.0, 820.0, 800.0, 790.0, 810.0, 800.0, 795.0, 805.0];
        let (ecg, _) = synth_ecg(&rr, 400.0, 10.0, 9);
        let base = detect_qrs(&ecg, 400.0).unwrap();
        for c in [8.0, 0.37] {
            let scaled: Vec<f64> = ecg.iter().map(|v| v * c).collect();
            assert_eq!(detect_qrs(&scaled, 400.0).unwrap(), base, "c={c}");
        }
    }

    #[test]
    fn rr_conversion_and_filters() {
        assert_eq!(rr_intervals(&[0, 320, 640], 400.0).unwrap(), vec![800.0, 800.0]);
        // 2500 ms interval dropped by the range rule.
        let peaks = [0usize, 320, 1320, 1644];
        assert_eq!(rr_intervals(&peaks, 400.0).unwrap(), vec![800.0, 810.0]);
        assert!(matches!(rr_intervals(&[5], 400.0), Err(BeatError::TooFewPeaks(1))));
    }

    #[test]
    fn rr_median_filter_drops_ectopic() {
        // Steady 800 ms rhythm with one 500 ms ectopic after the bootstrap.
        let mut peaks = vec![0usize];
        for k in 1..=8 {
            peaks.push(k * 320);
        }
        peaks.push(8 * 320 + 200);
        peaks.push(9 * 320 + 200);
        let rr = rr_intervals(&peaks, 400.0).unwrap();
        assert!(rr.iter().all(|&ms| (ms - 800.0).abs() < 1.0));
        assert_eq!(rr.len(), 9);
    }

    #[test]
    fn rr_recovery_from_jittered_ecg() {
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 33) as f64 / (1u64 << 31) as f64
        };
        let rr_true: Vec<f64> = (0..74).map(|_| 800.0 * (1.0 + 0.02 * (2.0 * next() - 1.0))).collect();
        let (ecg, _) = synth_ecg(&rr_true, 400.0, 10.0, 21);
        let peaks = detect_qrs(&ecg, 400.0).unwrap();
        let rr = rr_intervals(&peaks, 400.0).unwrap();
        assert_eq!(rr.len(), rr_true.len());
        let mut sq = 0.0;
        for (a, b) in rr.iter().zip(&rr_true) {
            sq += (a - b) * (a - b);
        }
        let rms = (sq / rr.len() as f64).sqrt();
        assert!(rms <= 5.0, "rms={rms} ms");
    }

    #[test]
    fn onsets_match_generator_feet_at_zero_noise() {
        let (rec, truth) = synth_recording(&spec(0.0, 0.0, 75.0), 60.5, 400.0).unwrap();
        let onsets = detect_pulse_onsets(&rec.cbfv_left, 400.0).unwrap();
        // Every complete-beat fold must be found within ±10 ms (±4 samples).
        for &t in &truth.beat_onsets[..truth.beat_onsets.len() - 1] {
            let hit = onsets.iter().any(|&o| (o as i64 - t as i64).abs() <= 4);
            assert!(hit, "no onset near truth {t}");
        }
        // And nothing may fire away from a fold.
        for &o in &onsets {
            let near = truth
                .beat_onsets
                .iter()
                .any(|&t| (o as i64 - t as i64).abs() <= 4);
            assert!(near, "spurious onset at {o}");
        }
    }

    #[test]
    fn onset_count_is_robust_at_default_noise() {
        let (rec, truth) = synth_recording(&spec(1.0, 0.02, 75.0), 120.0, 400.0).unwrap();
        let onsets = detect_pulse_onsets(&rec.cbfv_left, 400.0).unwrap();
        let complete = truth.beat_onsets.len() - 1;
        assert!(
            (onsets.len() as i64 - complete as i64).abs() <= 1,
            "{} onsets vs {} beats",
            onsets.len(),
            complete
        );
        for (&o, &t) in onsets.iter().zip(&truth.beat_onsets) {
            assert!(
                (o as i64 - t as i64).abs() <= 48,
                "onset {o} too far from fold {t}"
            );
        }
    }

    #[test]
    fn constant_signal_has_no_beats() {
        assert!(matches!(
            detect_pulse_onsets(&vec![20.0; 24000], 400.0),
            Err(BeatError::NoBeatsFound)
        ));
    }

    #[test]
    fn isolated_pulse_yields_single_onset_at_foot() {
        let params = crate::synth::pulse_params(60.0);
        let mut x = vec![params.baseline; 24000];
        let foot = 12000usize;
        for s in 0..320 {
            x[foot + s] = params.beat_value(s as f64 / 400.0, 0.8);
        }
        let onsets = detect_pulse_onsets(&x, 400.0).unwrap();
        assert_eq!(onsets.len(), 1, "{onsets:?}");
        // Smoothing spreads the rise by the half window plus one flat sample.
        assert!((onsets[0] as i64 - foot as i64).abs() <= 3, "{}", onsets[0]);
    }

    #[test]
    fn onsets_are_translation_equivariant() {
        let (rec, _) = synth_recording(&spec(0.0, 0.0, 75.0), 60.5, 400.0).unwrap();
        let base = detect_pulse_onsets(&rec.cbfv_left, 400.0).unwrap();
        let k = 57usize;
        let mut shifted = vec![rec.cbfv_left[0]; k];
        shifted.extend_from_slice(&rec.cbfv_left);
        let moved = detect_pulse_onsets(&shifted, 400.0).unwrap();
        assert_eq!(moved.len(), base.len());
        for (&m, &b) in moved.iter().zip(&base) {
            assert_eq!(m, b + k);
        }
    }

    #[test]
    fn onsets_are_amplitude_scale_invariant() {
        let (rec, _) = synth_recording(&spec(0.0, 0.0, 72.0), 61.0, 400.0).unwrap();
        let base = detect_pulse_onsets(&rec.cbfv_left, 400.0).unwrap();
        for c in [8.0, 0.37] {
            let scaled: Vec<f64> = rec.cbfv_left.iter().map(|v| v * c).collect();
            assert_eq!(detect_pulse_onsets(&scaled, 400.0).unwrap(), base, "c={c}");
        }
    }
}
