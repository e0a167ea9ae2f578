//! Recording I/O, 400 Hz resampling, quality screening, and segmentation of
//! beat trains into fixed 360-beat analysis entries.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsio;

/// Common sampling rate every recording is brought to before analysis.
pub const ANALYSIS_RATE_HZ: f64 = 400.0;
/// Number of beats in one analysis entry.
pub const BEATS_PER_ENTRY: usize = 360;
/// Shortest physiologically plausible beat, seconds.
pub const MIN_BEAT_S: f64 = 0.3;
/// Longest physiologically plausible beat, seconds.
pub const MAX_BEAT_S: f64 = 2.0;

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("MissingMetadata(\"{0}\")")]
    MissingMetadata(String),
    #[error("InvalidMetadata: {0}")]
    InvalidMetadata(String),
    #[error("ChannelLengthMismatch: {0} has {1} samples, expected {2}")]
    ChannelLengthMismatch(String, usize, usize),
    #[error("NonFiniteSample: line {line}, column {column}")]
    NonFiniteSample { line: usize, column: String },
    #[error("BadHeader: expected t,cbfv_left,cbfv_right[,ecg], got {0:?}")]
    BadHeader(String),
    #[error("BadValue: line {line}, column {column}: {detail}")]
    BadValue {
        line: usize,
        column: String,
        detail: String,
    },
    #[error("EmptyRecording: no sample rows")]
    EmptyRecording,
    #[error("FewerThan360Beats: side {side} has {onsets} onsets, need 361")]
    FewerThan360Beats { side: Side, onsets: usize },
    #[error("BeatLengthOutOfRange: side {side}, beat {index} is {seconds:.3} s")]
    BeatLengthOutOfRange {
        side: Side,
        index: usize,
        seconds: f64,
    },
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("Csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Subject cohort label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "healthy")]
    Healthy,
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "MCI")]
    Mci,
    #[serde(rename = "acute_stroke")]
    AcuteStroke,
    #[serde(rename = "post_stroke")]
    PostStroke,
    #[serde(rename = "established")]
    Established,
}

impl Group {
    pub const ALL: [Group; 6] = [
        Group::Healthy,
        Group::Ad,
        Group::Mci,
        Group::AcuteStroke,
        Group::PostStroke,
        Group::Established,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Healthy => "healthy",
            Group::Ad => "AD",
            Group::Mci => "MCI",
            Group::AcuteStroke => "acute_stroke",
            Group::PostStroke => "post_stroke",
            Group::Established => "established",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Group::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| format!("unknown group {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "left")]
    Left,
    #[serde(rename = "right")]
    Right,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::Left, Side::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A bilateral CBFV recording with optional synchronous ECG and subject
/// metadata from the sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub group: Group,
    /// Chronological age, years.
    pub age: f64,
    /// Body mass index, kg/m².
    pub bmi: f64,
    /// Sampling rate of all channels, Hz.
    pub sampling_rate: f64,
    /// Left CBFV channel, cm/s.
    pub cbfv_left: Vec<f64>,
    /// Right CBFV channel, cm/s.
    pub cbfv_right: Vec<f64>,
    /// ECG channel, mV, when recorded.
    pub ecg: Option<Vec<f64>>,
}

impl Recording {
    pub fn channel(&self, side: Side) -> &[f64] {
        match side {
            Side::Left => &self.cbfv_left,
            Side::Right => &self.cbfv_right,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.cbfv_left.len() as f64 / self.sampling_rate
    }

    /// Check the structural invariants: equal channel lengths, positive
    /// sampling rate, finite samples, plausible age and BMI.
    pub fn validate(&self) -> Result<()> {
        let n = self.cbfv_left.len();
        if n == 0 {
            return Err(IngestError::EmptyRecording);
        }
        if self.cbfv_right.len() != n {
            return Err(IngestError::ChannelLengthMismatch(
                "cbfv_right".into(),
                self.cbfv_right.len(),
                n,
            ));
        }
        if let Some(ecg) = &self.ecg {
            if ecg.len() != n {
                return Err(IngestError::ChannelLengthMismatch(
                    "ecg".into(),
                    ecg.len(),
                    n,
                ));
            }
        }
        if !(self.sampling_rate > 0.0) || !self.sampling_rate.is_finite() {
            return Err(IngestError::InvalidMetadata(format!(
                "sampling_rate_hz must be positive, got {}",
                self.sampling_rate
            )));
        }
        if !(self.age > 0.0 && self.age < 130.0) {
            return Err(IngestError::InvalidMetadata(format!(
                "age must be in (0, 130), got {}",
                self.age
            )));
        }
        if !(self.bmi > 0.0) || !self.bmi.is_finite() {
            return Err(IngestError::InvalidMetadata(format!(
                "bmi must be positive, got {}",
                self.bmi
            )));
        }
        Ok(())
    }
}

fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("meta.json")
}

fn require_f64(v: &serde_json::Value, key: &str) -> Result<f64> {
    v.get(key)
        .ok_or_else(|| IngestError::MissingMetadata(key.into()))?
        .as_f64()
        .ok_or_else(|| IngestError::InvalidMetadata(format!("{key} must be a number")))
}

/// Load a recording from its sample CSV plus `<name>.meta.json` sidecar.
///
/// The CSV header must be `t,cbfv_left,cbfv_right` with an optional trailing
/// `ecg` column. Any non-finite value fails the load, naming the first
/// offending line (1-based, header is line 1).
pub fn load_recording(path: &Path) -> Result<Recording> {
    let meta_raw = std::fs::read_to_string(sidecar_path(path))?;
    let meta: serde_json::Value = serde_json::from_str(&meta_raw)?;
    let subject_id = meta
        .get("subject_id")
        .ok_or_else(|| IngestError::MissingMetadata("subject_id".into()))?
        .as_str()
        .ok_or_else(|| IngestError::InvalidMetadata("subject_id must be a string".into()))?
        .to_string();
    let age = require_f64(&meta, "age")?;
    let bmi = require_f64(&meta, "bmi")?;
    let sampling_rate = require_f64(&meta, "sampling_rate_hz")?;
    let group_str = meta
        .get("group")
        .ok_or_else(|| IngestError::MissingMetadata("group".into()))?
        .as_str()
        .ok_or_else(|| IngestError::InvalidMetadata("group must be a string".into()))?;
    let group = Group::from_str(group_str).map_err(IngestError::InvalidMetadata)?;

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let has_ecg = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["t", "cbfv_left", "cbfv_right"] => false,
        ["t", "cbfv_left", "cbfv_right", "ecg"] => true,
        _ => return Err(IngestError::BadHeader(header.join(","))),
    };

    let mut cbfv_left = Vec::new();
    let mut cbfv_right = Vec::new();
    let mut ecg = if has_ecg { Some(Vec::new()) } else { None };
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |idx: usize, name: &str| -> Result<f64> {
            let raw = record.get(idx).ok_or_else(|| IngestError::BadValue {
                line,
                column: name.into(),
                detail: "missing field".into(),
            })?;
            let v: f64 = raw.trim().parse().map_err(|e| IngestError::BadValue {
                line,
                column: name.into(),
                detail: format!("{e}"),
            })?;
            if !v.is_finite() {
                return Err(IngestError::NonFiniteSample {
                    line,
                    column: name.into(),
                });
            }
            Ok(v)
        };
        field(0, "t")?;
        cbfv_left.push(field(1, "cbfv_left")?);
        cbfv_right.push(field(2, "cbfv_right")?);
        if let Some(e) = ecg.as_mut() {
            e.push(field(3, "ecg")?);
        }
    }

    let rec = Recording {
        subject_id,
        group,
        age,
        bmi,
        sampling_rate,
        cbfv_left,
        cbfv_right,
        ecg,
    };
    rec.validate()?;
    Ok(rec)
}

/// Write a recording as sample CSV + metadata sidecar, atomically.
///
/// Sample values use shortest round-trip formatting so a load returns the
/// exact same floats.
pub fn save_recording(rec: &Recording, path: &Path) -> Result<()> {
    rec.validate()?;
    let mut out = String::with_capacity(rec.cbfv_left.len() * 32);
    if rec.ecg.is_some() {
        out.push_str("t,cbfv_left,cbfv_right,ecg\n");
    } else {
        out.push_str("t,cbfv_left,cbfv_right\n");
    }
    for i in 0..rec.cbfv_left.len() {
        let t = i as f64 / rec.sampling_rate;
        match &rec.ecg {
            Some(ecg) => out.push_str(&format!(
                "{},{},{},{}\n",
                t, rec.cbfv_left[i], rec.cbfv_right[i], ecg[i]
            )),
            None => out.push_str(&format!("{},{},{}\n", t, rec.cbfv_left[i], rec.cbfv_right[i])),
        }
    }
    fsio::atomic_write(path, out.as_bytes())?;

    let meta = serde_json::json!({
        "subject_id": rec.subject_id,
        "age": rec.age,
        "group": rec.group.as_str(),
        "bmi": rec.bmi,
        "sampling_rate_hz": rec.sampling_rate,
    });
    let mut meta_out = serde_json::to_string_pretty(&meta)?;
    meta_out.push('\n');
    fsio::atomic_write(&sidecar_path(path), meta_out.as_bytes())?;
    Ok(())
}

fn resample_channel(x: &[f64], fs_in: f64, fs_out: f64) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n_out = (((x.len() - 1) as f64) * fs_out / fs_in).floor() as usize + 1;
    let ratio = fs_in / fs_out;
    (0..n_out)
        .map(|i| {
            let p = i as f64 * ratio;
            let j = (p.floor() as usize).min(x.len() - 1);
            let j2 = (j + 1).min(x.len() - 1);
            let frac = p - j as f64;
            x[j] + (x[j2] - x[j]) * frac
        })
        .collect()
}

/// Bring every channel onto the common 400 Hz grid by linear interpolation.
///
/// A recording already at 400 Hz is returned unchanged bit for bit, which
/// makes the operation idempotent.
pub fn resample_to_400hz(rec: &Recording) -> Recording {
    if (rec.sampling_rate - ANALYSIS_RATE_HZ).abs() < 1e-9 {
        let mut out = rec.clone();
        out.sampling_rate = ANALYSIS_RATE_HZ;
        return out;
    }
    Recording {
        subject_id: rec.subject_id.clone(),
        group: rec.group,
        age: rec.age,
        bmi: rec.bmi,
        sampling_rate: ANALYSIS_RATE_HZ,
        cbfv_left: resample_channel(&rec.cbfv_left, rec.sampling_rate, ANALYSIS_RATE_HZ),
        cbfv_right: resample_channel(&rec.cbfv_right, rec.sampling_rate, ANALYSIS_RATE_HZ),
        ecg: rec
            .ecg
            .as_ref()
            .map(|e| resample_channel(e, rec.sampling_rate, ANALYSIS_RATE_HZ)),
    }
}

/// Thresholds for [`quality_check`]; defaults match the documented rules.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QualityConfig {
    /// Minimum recording duration, seconds (360 beats at the slowest
    /// plausible rate).
    pub min_duration_s: f64,
    /// A constant run longer than this many seconds counts as a gap.
    pub max_gap_s: f64,
    /// Maximum tolerated fraction of samples sitting on min/max plateaus.
    pub max_clipped_fraction: f64,
    /// Cut between pulsatile content and noise, Hz.
    pub noise_cutoff_hz: f64,
    /// Maximum tolerated power fraction above the cutoff.
    pub max_noise_fraction: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            min_duration_s: BEATS_PER_ENTRY as f64 * MIN_BEAT_S,
            max_gap_s: 1.0,
            max_clipped_fraction: 0.005,
            noise_cutoff_hz: 20.0,
            max_noise_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelQuality {
    pub channel: String,
    pub too_short: bool,
    pub has_gaps: bool,
    pub clipped: bool,
    pub excessive_noise: bool,
}

impl ChannelQuality {
    pub fn clean(&self) -> bool {
        !(self.too_short || self.has_gaps || self.clipped || self.excessive_noise)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityReport {
    pub subject_id: String,
    pub channels: Vec<ChannelQuality>,
    /// True iff both CBFV channels carry no flag. ECG flags are reported but
    /// do not reject a recording; ECG-less analysis is still possible.
    pub accepted: bool,
}

fn longest_constant_run(x: &[f64]) -> usize {
    let mut longest = 0usize;
    let mut run = 1usize;
    for i in 1..x.len() {
        if x[i] == x[i - 1] {
            run += 1;
        } else {
            longest = longest.max(run);
            run = 1;
        }
    }
    longest.max(run)
}

/// Count samples lying in plateaus (runs of length ≥ 2) at the exact channel
/// minimum or maximum. Isolated extremes are normal pulse peaks, plateaus are
/// the signature of sensor saturation.
fn plateau_sample_count(x: &[f64]) -> usize {
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut count = 0usize;
    let mut i = 0usize;
    while i < x.len() {
        if x[i] == min || x[i] == max {
            let mut j = i + 1;
            while j < x.len() && x[j] == x[i] {
                j += 1;
            }
            if j - i >= 2 {
                count += j - i;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    count
}

fn high_frequency_fraction(x: &[f64], fs: f64, cutoff_hz: f64) -> f64 {
    let n = x.len();
    if n < 4 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut total = 0.0;
    let mut high = 0.0;
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let p = c.norm_sqr();
        total += p;
        if k as f64 * fs / n as f64 > cutoff_hz {
            high += p;
        }
    }
    if total > 0.0 {
        high / total
    } else {
        0.0
    }
}

fn channel_quality(name: &str, x: &[f64], fs: f64, cfg: &QualityConfig) -> ChannelQuality {
    let duration = x.len() as f64 / fs;
    ChannelQuality {
        channel: name.to_string(),
        too_short: duration < cfg.min_duration_s,
        has_gaps: longest_constant_run(x) as f64 / fs > cfg.max_gap_s,
        clipped: plateau_sample_count(x) as f64 / x.len().max(1) as f64 > cfg.max_clipped_fraction,
        excessive_noise: high_frequency_fraction(x, fs, cfg.noise_cutoff_hz)
            > cfg.max_noise_fraction,
    }
}

/// Screen a resampled recording. Pure: same input, same report.
pub fn quality_check(rec: &Recording, cfg: &QualityConfig) -> QualityReport {
    let fs = rec.sampling_rate;
    let mut channels = vec![
        channel_quality("cbfv_left", &rec.cbfv_left, fs, cfg),
        channel_quality("cbfv_right", &rec.cbfv_right, fs, cfg),
    ];
    if let Some(ecg) = &rec.ecg {
        channels.push(channel_quality("ecg", ecg, fs, cfg));
    }
    let accepted = channels
        .iter()
        .filter(|c| c.channel.starts_with("cbfv"))
        .all(ChannelQuality::clean);
    QualityReport {
        subject_id: rec.subject_id.clone(),
        channels,
        accepted,
    }
}

/// One 360-beat window of a single CBFV side.
#[derive(Debug, Clone, PartialEq)]
pub struct EntrySegment {
    pub subject_id: String,
    pub side: Side,
    /// Samples covering exactly the 360 beats, at 400 Hz.
    pub samples: Vec<f64>,
    /// 361 onset indices into `samples`; first is 0, last is `samples.len()`.
    pub beat_onsets: Vec<usize>,
    /// R-peak indices relative to the window start. Peaks up to one second
    /// before the window are kept (negative indices) so the first beat still
    /// has a preceding R reference.
    pub qrs_peaks: Option<Vec<i64>>,
}

/// Cut one side of a recording into consecutive 360-beat entries. The
/// trailing partial window is discarded.
pub fn segment_entries(
    rec: &Recording,
    side: Side,
    onsets: &[usize],
    r_peaks: Option<&[usize]>,
) -> Result<Vec<EntrySegment>> {
    if onsets.len() < BEATS_PER_ENTRY + 1 {
        return Err(IngestError::FewerThan360Beats {
            side,
            onsets: onsets.len(),
        });
    }
    let samples = rec.channel(side);
    let fs = rec.sampling_rate;
    let n_entries = (onsets.len() - 1) / BEATS_PER_ENTRY;
    let mut entries = Vec::with_capacity(n_entries);
    for e in 0..n_entries {
        let lo = e * BEATS_PER_ENTRY;
        let start = onsets[lo];
        let end = onsets[lo + BEATS_PER_ENTRY];
        let window_onsets: Vec<usize> = onsets[lo..=lo + BEATS_PER_ENTRY]
            .iter()
            .map(|&o| o - start)
            .collect();
        for (b, w) in window_onsets.windows(2).enumerate() {
            let seconds = (w[1] - w[0]) as f64 / fs;
            if !(MIN_BEAT_S..=MAX_BEAT_S).contains(&seconds) {
                return Err(IngestError::BeatLengthOutOfRange {
                    side,
                    index: lo + b,
                    seconds,
                });
            }
        }
        let qrs_peaks = r_peaks.map(|peaks| {
            let lookback = fs.round() as i64;
            peaks
                .iter()
                .map(|&p| p as i64 - start as i64)
                .filter(|&p| p >= -lookback && p < (end - start) as i64)
                .collect()
        });
        entries.push(EntrySegment {
            subject_id: rec.subject_id.clone(),
            side,
            samples: samples[start..end].to_vec(),
            beat_onsets: window_onsets,
            qrs_peaks,
        });
    }
    Ok(entries)
}

/// Read a cohort manifest CSV (`subject_id,path`). Relative paths resolve
/// against the manifest's own directory.
pub fn read_cohort_manifest(path: &Path) -> Result<Vec<(String, std::path::PathBuf)>> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<&str> = rdr.headers()?.iter().map(str::trim).collect();
    if header != ["subject_id", "path"] {
        return Err(IngestError::BadHeader(header.join(",")));
    }
    let mut entries = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let id = record.get(0).unwrap_or("").trim().to_string();
        let raw = record.get(1).unwrap_or("").trim();
        if id.is_empty() || raw.is_empty() {
            return Err(IngestError::BadValue {
                line: i + 2,
                column: "path".into(),
                detail: "empty manifest field".into(),
            });
        }
        let p = Path::new(raw);
        let resolved = if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        };
        entries.push((id, resolved));
    }
    Ok(entries)
}

/// Write a cohort manifest CSV atomically; paths are stored as given.
pub fn write_cohort_manifest(entries: &[(String, String)], path: &Path) -> Result<()> {
    let mut out = String::from("subject_id,path\n");
    for (id, p) in entries {
        out.push_str(&format!("{id},{p}\n"));
    }
    fsio::atomic_write(path, out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_recording(fs: f64, seconds: f64) -> Recording {
        let n = (fs * seconds).round() as usize;
        let wave = |i: usize| {
            let t = i as f64 / fs;
            60.0 + 25.0 * (2.0 * std::f64::consts::PI * 1.2 * t).sin()
                + 5.0 * (2.0 * std::f64::consts::PI * 2.4 * t + 0.7).sin()
        };
        Recording {
            subject_id: "t001".into(),
            group: Group::Healthy,
            age: 62.0,
            bmi: 24.1,
            sampling_rate: fs,
            cbfv_left: (0..n).map(wave).collect(),
            cbfv_right: (0..n).map(|i| wave(i) * 1.02).collect(),
            ecg: None,
        }
    }

    #[test]
    fn resample_at_400_is_identity() {
        let rec = test_recording(400.0, 5.0);
        let out = resample_to_400hz(&rec);
        assert_eq!(out.cbfv_left, rec.cbfv_left);
        assert_eq!(out.cbfv_right, rec.cbfv_right);
    }

    #[test]
    fn resample_is_idempotent() {
        let rec = test_recording(500.0, 5.0);
        let once = resample_to_400hz(&rec);
        let twice = resample_to_400hz(&once);
        assert_eq!(once.cbfv_left, twice.cbfv_left);
        assert_eq!(once.cbfv_right, twice.cbfv_right);
    }

    #[test]
    fn resample_ramp_is_exact() {
        let fs = 100.0;
        let n = 1000;
        let ramp: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
        let mut rec = test_recording(fs, 10.0);
        rec.cbfv_left = ramp;
        rec.cbfv_right = rec.cbfv_left.clone();
        let out = resample_to_400hz(&rec);
        for (i, &v) in out.cbfv_left.iter().enumerate() {
            let t = i as f64 / 400.0;
            assert!((v - t).abs() < 1e-9, "i={i} v={v} t={t}");
        }
    }

    #[test]
    fn resample_sine_500_to_400() {
        let fs = 500.0;
        let n = 5000;
        let sine: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * (i as f64 / fs)).sin())
            .collect();
        let mut rec = test_recording(fs, 10.0);
        rec.cbfv_left = sine;
        rec.cbfv_right = rec.cbfv_left.clone();
        let out = resample_to_400hz(&rec);
        assert_eq!(out.cbfv_left.len(), 4000);
        let mut sq = 0.0;
        for (i, &v) in out.cbfv_left.iter().enumerate() {
            let truth = (2.0 * std::f64::consts::PI * (i as f64 / 400.0)).sin();
            sq += (v - truth) * (v - truth);
        }
        let rms = (sq / out.cbfv_left.len() as f64).sqrt();
        assert!(rms < 1e-3, "rms={rms}");
    }

    #[test]
    fn quality_accepts_clean_recording() {
        let rec = test_recording(400.0, 120.0);
        let report = quality_check(&rec, &QualityConfig::default());
        assert!(report.accepted, "{report:?}");
    }

    #[test]
    fn quality_flags_short_recording() {
        let rec = test_recording(400.0, 60.0);
        let report = quality_check(&rec, &QualityConfig::default());
        assert!(!report.accepted);
        assert!(report.channels[0].too_short);
    }

    #[test]
    fn quality_flags_frozen_samples() {
        let mut rec = test_recording(400.0, 120.0);
        for i in 4000..4800 {
            rec.cbfv_left[i] = rec.cbfv_left[4000];
        }
        let report = quality_check(&rec, &QualityConfig::default());
        assert!(report.channels[0].has_gaps);
        assert!(!report.accepted);
    }

    #[test]
    fn quality_flags_noise_dominated_channel() {
        let mut rec = test_recording(400.0, 120.0);
        // Deterministic broadband chirp-ish content well above 20 Hz.
        for (i, v) in rec.cbfv_right.iter_mut().enumerate() {
            let t = i as f64 / 400.0;
            *v = 60.0 + 40.0 * (2.0 * std::f64::consts::PI * 90.0 * t).sin();
        }
        let report = quality_check(&rec, &QualityConfig::default());
        assert!(report.channels[1].excessive_noise);
        assert!(!report.accepted);
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t001.csv");
        let mut rec = test_recording(400.0, 3.0);
        rec.ecg = Some(rec.cbfv_left.iter().map(|v| v * 0.01 - 0.5).collect());
        save_recording(&rec, &path).unwrap();
        let loaded = load_recording(&path).unwrap();
        assert_eq!(loaded, rec);
    }

    #[test]
    fn load_without_ecg_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t001.csv");
        let rec = test_recording(400.0, 2.0);
        save_recording(&rec, &path).unwrap();
        let loaded = load_recording(&path).unwrap();
        assert!(loaded.ecg.is_none());
        assert_eq!(loaded, rec);
    }

    #[test]
    fn missing_age_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t001.csv");
        let rec = test_recording(400.0, 2.0);
        save_recording(&rec, &path).unwrap();
        let sidecar = path.with_extension("meta.json");
        let meta = r#"{"subject_id":"t001","group":"healthy","bmi":24.1,"sampling_rate_hz":400.0}"#;
        std::fs::write(&sidecar, meta).unwrap();
        let err = load_recording(&path).unwrap_err();
        assert_eq!(err.to_string(), "MissingMetadata(\"age\")");
    }

    #[test]
    fn non_finite_sample_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t001.csv");
        let rec = test_recording(400.0, 2.0);
        save_recording(&rec, &path).unwrap();
        let mut body = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = body.lines().collect();
        let replaced = lines[3].to_string().replace(
            lines[3].split(',').nth(1).unwrap(),
            "NaN",
        );
        lines[3] = &replaced;
        body = lines.join("\n");
        std::fs::write(&path, body).unwrap();
        let err = load_recording(&path).unwrap_err();
        match err {
            IngestError::NonFiniteSample { line, ref column } => {
                assert_eq!(line, 4);
                assert_eq!(column, "cbfv_left");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn segmentation_windows_and_trailing_discard() {
        let rec = test_recording(400.0, 600.0);
        let onsets: Vec<usize> = (0..725).map(|i| i * 320).collect();
        let entries = segment_entries(&rec, Side::Left, &onsets, None).unwrap();
        assert_eq!(entries.len(), 2);
        for entry in &entries {
            assert_eq!(entry.beat_onsets.len(), 361);
            assert_eq!(entry.beat_onsets[0], 0);
            assert_eq!(*entry.beat_onsets.last().unwrap(), entry.samples.len());
            assert_eq!(entry.samples.len(), 360 * 320);
        }
        // Partition: windows cover beats 0..360 and 360..720, in order.
        assert_eq!(entries[0].samples[0], rec.cbfv_left[0]);
        assert_eq!(entries[1].samples[0], rec.cbfv_left[onsets[360]]);
    }

    #[test]
    fn segmentation_boundary_cases() {
        let rec = test_recording(400.0, 600.0);
        let onsets: Vec<usize> = (0..361).map(|i| i * 320).collect();
        assert_eq!(
            segment_entries(&rec, Side::Left, &onsets, None).unwrap().len(),
            1
        );
        let too_few: Vec<usize> = (0..300).map(|i| i * 320).collect();
        let err = segment_entries(&rec, Side::Left, &too_few, None).unwrap_err();
        assert!(matches!(err, IngestError::FewerThan360Beats { .. }));
    }

    #[test]
    fn cohort_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let entries = vec![
            ("s0001".to_string(), "s0001.csv".to_string()),
            ("s0002".to_string(), "/abs/s0002.csv".to_string()),
        ];
        write_cohort_manifest(&entries, &path).unwrap();
        let read = read_cohort_manifest(&path).unwrap();
        assert_eq!(read[0].0, "s0001");
        assert_eq!(read[0].1, dir.path().join("s0001.csv"));
        assert_eq!(read[1].1, Path::new("/abs/s0002.csv"));
    }

    #[test]
    fn segmentation_keeps_preceding_r_peak() {
        let rec = test_recording(400.0, 600.0);
        let onsets: Vec<usize> = (1..363).map(|i| i * 320).collect();
        let r_peaks: Vec<usize> = (1..363).map(|i| i * 320 - 32).collect();
        let entries = segment_entries(&rec, Side::Left, &onsets, Some(&r_peaks)).unwrap();
        let qrs = entries[0].qrs_peaks.as_ref().unwrap();
        assert_eq!(qrs[0], -32);
    }
}
