//! Per-subject signal synthesis: a CBFV beat train built from the analytic
//! pulse template, a matched ECG with a fixed R-to-foot lead, additive
//! Gaussian noise, and the exact ground truth needed to score every
//! downstream detector.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Group, Recording};
use crate::synth::model::{landmark_truth, pulse_params, LandmarkTruth, PulseModelParams};

/// Constant-baseline lead-in before the first beat, seconds. Long enough to
/// hold the first R-peak (which precedes the first foot by [`QRS_LEAD_S`]).
pub const LEAD_IN_S: f64 = 0.5;
/// The R-peak leads every pulse foot by this many seconds, fixing the LT
/// ground truth.
pub const QRS_LEAD_S: f64 = 0.08;
/// Right-channel amplitude gain relative to the left, about the baseline.
pub const RIGHT_GAIN: f64 = 1.02;
/// ECG noise is the CBFV noise level divided by this (mV per cm/s).
pub const ECG_NOISE_DIVISOR: f64 = 20.0;

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("DurationTooShort: need ≥ {need:.1} s for 10 beats, got {got:.1} s")]
    DurationTooShort { need: f64, got: f64 },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("Ingest: {0}")]
    Ingest(#[from] crate::ingest::IngestError),
}

/// Everything that determines one synthetic subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub subject_id: String,
    pub group: Group,
    /// Chronological age, years.
    pub age: f64,
    /// Added vascular aging, years; 0 for healthy.
    pub acceleration: f64,
    /// Resting heart rate, bpm.
    pub heart_rate: f64,
    /// RR jitter as a fraction of the nominal interval.
    pub rr_jitter: f64,
    /// CBFV noise standard deviation, cm/s.
    pub noise_level: f64,
    pub bmi: f64,
    pub seed: u64,
}

impl SubjectSpec {
    /// The age the vasculature behaves like; drives the pulse shape.
    pub fn effective_age(&self) -> f64 {
        self.age + self.acceleration
    }
}

/// Exact generation record for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingTruth {
    pub spec: SubjectSpec,
    pub effective_age: f64,
    pub duration_s: f64,
    pub qrs_lead_s: f64,
    /// Landmark ground truth of the pulse template.
    pub landmarks: LandmarkTruth,
    /// Start sample of every complete beat, plus the terminal boundary
    /// (start of the trailing partial beat).
    pub beat_onsets: Vec<usize>,
    /// Sample index of every R-peak laid into the ECG.
    pub r_peaks: Vec<usize>,
}

impl RecordingTruth {
    /// True RR series in milliseconds, from the R-peak indices.
    pub fn rr_ms(&self, fs: f64) -> Vec<f64> {
        self.r_peaks
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 / fs * 1000.0)
            .collect()
    }
}

fn validate_spec(spec: &SubjectSpec) -> Result<()> {
    let e = spec.effective_age();
    if !(20.0..=100.0).contains(&e) {
        return Err(SynthError::InvalidConfig(format!(
            "effective age {e:.1} outside [20, 100] for {}",
            spec.subject_id
        )));
    }
    if !(spec.heart_rate > 30.0 && spec.heart_rate < 220.0) {
        return Err(SynthError::InvalidConfig(format!(
            "heart rate {} outside (30, 220)",
            spec.heart_rate
        )));
    }
    if !(0.0..0.5).contains(&spec.rr_jitter) {
        return Err(SynthError::InvalidConfig(format!(
            "rr jitter {} outside [0, 0.5)",
            spec.rr_jitter
        )));
    }
    if spec.noise_level < 0.0 {
        return Err(SynthError::InvalidConfig("negative noise level".into()));
    }
    Ok(())
}

fn add_gaussian_wave(ecg: &mut [f64], fs: f64, center_s: f64, amp: f64, sigma_s: f64) {
    let lo = ((center_s - 5.0 * sigma_s) * fs).floor().max(0.0) as usize;
    let hi = (((center_s + 5.0 * sigma_s) * fs).ceil() as usize).min(ecg.len());
    for i in lo..hi {
        let d = i as f64 / fs - center_s;
        ecg[i] += amp * (-d * d / (2.0 * sigma_s * sigma_s)).exp();
    }
}

/// One PQRST-ish complex centered on the R peak at `r_s` seconds.
fn add_qrs_complex(ecg: &mut [f64], fs: f64, r_s: f64) {
    add_gaussian_wave(ecg, fs, r_s - 0.025, -0.15, 0.008);
    add_gaussian_wave(ecg, fs, r_s, 1.0, 0.008);
    add_gaussian_wave(ecg, fs, r_s + 0.025, -0.2, 0.008);
    add_gaussian_wave(ecg, fs, r_s + 0.2, 0.25, 0.04);
}

/// Generate one subject's recording and its ground truth.
///
/// The beat train starts after a constant lead-in; every beat is the pulse
/// template time-scaled to its own (jittered) RR interval, so beats tile the
/// signal without overlap and the trailing partial beat fills the remainder.
/// All randomness comes from `spec.seed` in a fixed draw order: RR jitters,
/// left noise, right noise, ECG noise.
pub fn synth_recording(spec: &SubjectSpec, duration_s: f64, fs: f64) -> Result<(Recording, RecordingTruth)> {
    validate_spec(spec)?;
    let rr_nom = 60.0 / spec.heart_rate;
    let need = LEAD_IN_S + 10.0 * rr_nom;
    if duration_s < need {
        return Err(SynthError::DurationTooShort {
            need,
            got: duration_s,
        });
    }

    let params: PulseModelParams = pulse_params(spec.effective_age());
    let landmarks = landmark_truth(&params).ok_or_else(|| {
        SynthError::InvalidConfig(format!(
            "pulse model degenerate at effective age {:.1}",
            spec.effective_age()
        ))
    })?;

    let n_total = (duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Beat boundary times; the last one lands at or past the recording end.
    let mut onset_times = vec![LEAD_IN_S];
    loop {
        let last = *onset_times.last().unwrap();
        if (last * fs).round() as usize >= n_total {
            break;
        }
        let u: f64 = if spec.rr_jitter > 0.0 {
            rng.random_range(-spec.rr_jitter..=spec.rr_jitter)
        } else {
            0.0
        };
        onset_times.push(last + rr_nom * (1.0 + u));
    }
    let boundary_idx: Vec<usize> = onset_times
        .iter()
        .map(|&t| (t * fs).round() as usize)
        .collect();

    let mut clean = vec![params.baseline; n_total];
    let mut complete = 0usize;
    for k in 0..boundary_idx.len() - 1 {
        let a = boundary_idx[k];
        let b = boundary_idx[k + 1];
        let t_beat = (b - a) as f64 / fs;
        let stop = b.min(n_total);
        for s in a..stop {
            clean[s] = params.beat_value((s - a) as f64 / fs, t_beat);
        }
        if b <= n_total {
            complete += 1;
        }
    }
    let beat_onsets: Vec<usize> = boundary_idx[..=complete].to_vec();

    let mut ecg_clean = vec![0.0; n_total];
    let mut r_peaks = Vec::new();
    for k in 0..boundary_idx.len() - 1 {
        let r_s = onset_times[k] - QRS_LEAD_S;
        let r_idx = (r_s * fs).round() as usize;
        if r_idx >= n_total {
            break;
        }
        add_qrs_complex(&mut ecg_clean, fs, r_s);
        r_peaks.push(r_idx);
    }

    let sigma = spec.noise_level;
    let noisy = |x: &[f64], s: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        x.iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(rng);
                v + s * z
            })
            .collect()
    };
    let cbfv_left = noisy(&clean, sigma, &mut rng);
    let right_clean: Vec<f64> = clean
        .iter()
        .map(|&v| params.baseline + RIGHT_GAIN * (v - params.baseline))
        .collect();
    let cbfv_right = noisy(&right_clean, sigma, &mut rng);
    let ecg = noisy(&ecg_clean, sigma / ECG_NOISE_DIVISOR, &mut rng);

    let rec = Recording {
        subject_id: spec.subject_id.clone(),
        group: spec.group,
        age: spec.age,
        bmi: spec.bmi,
        sampling_rate: fs,
        cbfv_left,
        cbfv_right,
        ecg: Some(ecg),
    };
    let truth = RecordingTruth {
        spec: spec.clone(),
        effective_age: spec.effective_age(),
        duration_s,
        qrs_lead_s: QRS_LEAD_S,
        landmarks,
        beat_onsets,
        r_peaks,
    };
    Ok((rec, truth))
}

/// Build an ECG alone from a given RR series at a target SNR, for detector
/// benchmarks. Returns the signal and the true R-peak indices. SNR is
/// `10·log10(P_signal / P_noise)` with the clean signal's mean square power.
pub fn synth_ecg(rr_ms: &[f64], fs: f64, snr_db: f64, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let start = 0.5;
    let total_s = start + rr_ms.iter().sum::<f64>() / 1000.0 + 0.5;
    let n = (total_s * fs).round() as usize;
    let mut ecg = vec![0.0; n];
    let mut r_peaks = Vec::with_capacity(rr_ms.len() + 1);
    let mut t = start;
    add_qrs_complex(&mut ecg, fs, t);
    r_peaks.push((t * fs).round() as usize);
    for &rr in rr_ms {
        t += rr / 1000.0;
        add_qrs_complex(&mut ecg, fs, t);
        r_peaks.push((t * fs).round() as usize);
    }
    let power = ecg.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in ecg.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * z;
    }
    (ecg, r_peaks)
}
