//! Per-subject orchestration from raw recording to feature row.
//!
//! One subject flows through resampling, quality screening, QRS and HRV
//! extraction, per-side onset detection, entry segmentation, dominant-pulse
//! reduction, landmark detection and manifest evaluation, side averaging,
//! and the final validity check. Subjects that fall out at any stage are
//! not an error: each one leaves a log record saying where and why.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beats::{detect_pulse_onsets, detect_qrs, rr_intervals};
use crate::features::{
    analyze_dominant_pulse, combine_sides, eval_manifest, hrv_metrics, validity_check,
    SubjectFeatures,
};
use crate::ingest::{
    load_recording, quality_check, read_cohort_manifest, resample_to_400hz, segment_entries,
    IngestError, QualityConfig, QualityReport, Recording, Side,
};
use crate::pulse::{dominant_pulse, extract_beats, DominantPulse, PULSE_GRID};

/// Errors that abort a whole extraction run. Per-subject signal problems
/// never land here; they become log records instead.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("EmptyManifest")]
    EmptyManifest,
    #[error("SubjectIdMismatch: manifest says {manifest}, sidecar says {sidecar}")]
    SubjectIdMismatch { manifest: String, sidecar: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Subject status values written to the extraction log.
pub mod status {
    pub const ACCEPTED: &str = "accepted";
    pub const REJECTED_QUALITY: &str = "rejected_quality";
    pub const REJECTED_ECG: &str = "rejected_ecg";
    pub const REJECTED_NO_SIDE: &str = "rejected_no_side";
    pub const REJECTED_VALIDITY: &str = "rejected_validity";
}

/// One line of the extraction log: what happened to one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub subject_id: String,
    /// [`status::ACCEPTED`] or the first reason the subject fell out.
    pub status: String,
    /// CBFV sides that contributed feature values (0, 1 or 2).
    pub sides_used: usize,
    /// All six landmarks found on at least one contributing side.
    pub landmarks_complete: bool,
    /// Invalid manifest slots in the combined vector; 128 when no side
    /// produced values.
    pub invalid_slots: usize,
    /// Free-text notes: flagged channels, per-side failures.
    pub detail: String,
}

/// Intermediate per-side products kept around for optional dumping.
#[derive(Debug, Clone)]
pub struct SideArtifacts {
    pub side: Side,
    /// Pulse-onset sample indices on the analysis grid; empty when onset
    /// detection itself failed.
    pub onsets: Vec<usize>,
    /// The side's representative pulse, when one was formed.
    pub pulse: Option<DominantPulse>,
}

/// Outcome of running one subject through the pipeline.
#[derive(Debug, Clone)]
pub struct SubjectExtraction {
    pub record: ExtractionRecord,
    /// Present exactly when `record.status` is [`status::ACCEPTED`].
    pub features: Option<SubjectFeatures>,
    /// Per-side intermediates; empty when the subject was rejected before
    /// any side was processed.
    pub artifacts: Vec<SideArtifacts>,
}

/// Everything extracted from one cohort manifest, in manifest order.
#[derive(Debug, Clone)]
pub struct CohortExtraction {
    /// One entry per manifest line, accepted or not.
    pub extractions: Vec<SubjectExtraction>,
}

impl CohortExtraction {
    /// Features of the accepted subjects, in manifest order.
    pub fn subjects(&self) -> Vec<SubjectFeatures> {
        self.extractions
            .iter()
            .filter_map(|e| e.features.clone())
            .collect()
    }

    /// The full extraction log, one record per manifest line.
    pub fn log(&self) -> Vec<ExtractionRecord> {
        self.extractions.iter().map(|e| e.record.clone()).collect()
    }
}

/// One side's trip through onsets, segmentation, and pulse analysis.
struct SideOutcome {
    /// Manifest slot values; `None` when the side produced nothing usable.
    values: Option<Vec<Option<f64>>>,
    note: Option<String>,
    artifacts: SideArtifacts,
}

impl SideOutcome {
    fn failed(
        side: Side,
        stage: &str,
        detail: impl std::fmt::Display,
        onsets: Vec<usize>,
    ) -> Self {
        SideOutcome {
            values: None,
            note: Some(format!("{side:?} {stage}: {detail}")),
            artifacts: SideArtifacts {
                side,
                onsets,
                pulse: None,
            },
        }
    }
}

/// Median of an unsorted sample; `None` when empty. Even counts average
/// the two central order statistics.
fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Combine per-entry dominant pulses into one representative for the side:
/// unweighted pointwise mean and unweighted mean duration. A single entry
/// passes through untouched.
fn merge_entry_pulses(pulses: &[DominantPulse]) -> DominantPulse {
    if pulses.len() == 1 {
        return pulses[0].clone();
    }
    let k = pulses.len() as f64;
    let samples = (0..PULSE_GRID)
        .map(|g| pulses.iter().map(|p| p.samples[g]).sum::<f64>() / k)
        .collect();
    DominantPulse {
        samples,
        member_count: pulses.iter().map(|p| p.member_count).sum(),
        total_beats: pulses.iter().map(|p| p.total_beats).sum(),
        mean_beat_duration: pulses.iter().map(|p| p.mean_beat_duration).sum::<f64>() / k,
    }
}

/// Run one CBFV side: onsets, 360-beat entries, dominant pulse per entry,
/// QRS lead estimation, landmark detection, manifest evaluation.
fn side_outcome(rec: &Recording, side: Side, r_peaks: Option<&[usize]>) -> SideOutcome {
    let fs = rec.sampling_rate;
    let onsets = match detect_pulse_onsets(rec.channel(side), fs) {
        Ok(o) => o,
        Err(e) => return SideOutcome::failed(side, "onsets", e, Vec::new()),
    };
    let entries = match segment_entries(rec, side, &onsets, r_peaks) {
        Ok(v) => v,
        Err(e) => return SideOutcome::failed(side, "segmentation", e, onsets),
    };

    let mut pulses = Vec::with_capacity(entries.len());
    let mut leads: Vec<f64> = Vec::new();
    for entry in &entries {
        let beats = extract_beats(entry);
        match dominant_pulse(&beats) {
            Ok(dp) => pulses.push(dp),
            Err(e) => return SideOutcome::failed(side, "dominant pulse", e, onsets),
        }
        if let Some(qrs) = &entry.qrs_peaks {
            // Lead of each beat: onset minus the nearest R at or before it.
            for &onset in &entry.beat_onsets[..entry.beat_onsets.len() - 1] {
                let o = onset as i64;
                if let Some(&r) = qrs.iter().take_while(|&&r| r <= o).last() {
                    leads.push((o - r) as f64 / fs);
                }
            }
        }
    }
    let dp = merge_entry_pulses(&pulses);
    // Beat time starts at the pulse foot, so the R wave sits at minus the
    // median lead; no ECG leaves the reference (and LT) unset.
    let qrs_reference_time_s = median(&mut leads).map(|m| -m);
    let analysis = analyze_dominant_pulse(&dp, qrs_reference_time_s);
    let artifacts = SideArtifacts {
        side,
        onsets,
        pulse: Some(dp),
    };
    if analysis.landmarks.is_none() {
        return SideOutcome {
            values: None,
            note: Some(format!("{side:?} landmarks: undetectable")),
            artifacts,
        };
    }
    SideOutcome {
        values: Some(eval_manifest(&analysis)),
        note: None,
        artifacts,
    }
}

/// Channels that tripped a quality flag, as `name: flag+flag` notes.
fn quality_notes(q: &QualityReport) -> String {
    q.channels
        .iter()
        .filter_map(|c| {
            let mut flags = Vec::new();
            if c.too_short {
                flags.push("too_short");
            }
            if c.has_gaps {
                flags.push("gaps");
            }
            if c.clipped {
                flags.push("clipped");
            }
            if c.excessive_noise {
                flags.push("noise");
            }
            (!flags.is_empty()).then(|| format!("{}: {}", c.channel, flags.join("+")))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn rejected(rec: &Recording, status: &str, detail: String) -> SubjectExtraction {
    SubjectExtraction {
        record: ExtractionRecord {
            subject_id: rec.subject_id.clone(),
            status: status.to_string(),
            sides_used: 0,
            landmarks_complete: false,
            invalid_slots: crate::features::MANIFEST_LEN,
            detail,
        },
        features: None,
        artifacts: Vec::new(),
    }
}

/// Run one recording through the full extraction chain.
///
/// Never fails: every outcome, accepted or not, is a [`SubjectExtraction`]
/// whose record says what happened. An ECG is required because the feature
/// vector carries HRV metrics and the latency-to-foot slots need a QRS
/// reference; without one the subject cannot pass validity anyway.
pub fn extract_subject(rec: &Recording, quality: &QualityConfig) -> SubjectExtraction {
    let rec = resample_to_400hz(rec);
    let q = quality_check(&rec, quality);
    if !q.accepted {
        return rejected(&rec, status::REJECTED_QUALITY, quality_notes(&q));
    }

    let ecg_chain = match &rec.ecg {
        None => Err("no ECG channel".to_string()),
        Some(ecg) => detect_qrs(ecg, rec.sampling_rate)
            .map_err(|e| e.to_string())
            .and_then(|peaks| {
                rr_intervals(&peaks, rec.sampling_rate)
                    .map(|rr| (peaks, rr))
                    .map_err(|e| e.to_string())
            })
            .and_then(|(peaks, rr)| {
                hrv_metrics(&rr)
                    .map(|hrv| (peaks, hrv))
                    .map_err(|e| e.to_string())
            }),
    };
    let (r_peaks, hrv) = match ecg_chain {
        Ok(v) => v,
        Err(e) => return rejected(&rec, status::REJECTED_ECG, e),
    };

    let left = side_outcome(&rec, Side::Left, Some(&r_peaks));
    let right = side_outcome(&rec, Side::Right, Some(&r_peaks));
    let sides_used = left.values.is_some() as usize + right.values.is_some() as usize;
    let detail = [&left.note, &right.note]
        .iter()
        .filter_map(|n| n.as_deref())
        .collect::<Vec<_>>()
        .join("; ");
    let artifacts = vec![left.artifacts, right.artifacts];

    let combined = match combine_sides(left.values.as_deref(), right.values.as_deref()) {
        Some(v) => v,
        None => {
            let mut out = rejected(&rec, status::REJECTED_NO_SIDE, detail);
            out.artifacts = artifacts;
            return out;
        }
    };
    // A side only contributes once its landmarks are detected, so a
    // non-empty combination implies a complete landmark set somewhere.
    let validity = validity_check(sides_used > 0, &combined);
    let record = ExtractionRecord {
        subject_id: rec.subject_id.clone(),
        status: if validity.valid {
            status::ACCEPTED
        } else {
            status::REJECTED_VALIDITY
        }
        .to_string(),
        sides_used,
        landmarks_complete: validity.landmarks_complete,
        invalid_slots: validity.invalid_slots,
        detail,
    };
    let features = validity.valid.then(|| SubjectFeatures {
        subject_id: rec.subject_id.clone(),
        age: rec.age,
        group: rec.group,
        pulse_values: combined,
        bmi: rec.bmi,
        hrv,
    });
    SubjectExtraction {
        record,
        features,
        artifacts,
    }
}

/// Extract every subject listed in a cohort manifest, in manifest order.
/// Subjects are processed in parallel; recordings are loaded one at a time
/// per worker so memory stays bounded by the worker count.
pub fn extract_cohort(
    manifest_path: &Path,
    quality: &QualityConfig,
) -> Result<CohortExtraction, PipelineError> {
    let entries = read_cohort_manifest(manifest_path)?;
    if entries.is_empty() {
        return Err(PipelineError::EmptyManifest);
    }
    let extractions: Vec<SubjectExtraction> = entries
        .par_iter()
        .map(|(id, path)| -> Result<SubjectExtraction, PipelineError> {
            let rec = load_recording(path)?;
            if rec.subject_id != *id {
                return Err(PipelineError::SubjectIdMismatch {
                    manifest: id.clone(),
                    sidecar: rec.subject_id,
                });
            }
            Ok(extract_subject(&rec, quality))
        })
        .collect::<Result<_, _>>()?;
    Ok(CohortExtraction { extractions })
}

/// Write the per-subject extraction log as CSV, atomically.
pub fn write_extraction_log(path: &Path, log: &[ExtractionRecord]) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "subject_id",
            "status",
            "sides_used",
            "landmarks_complete",
            "invalid_slots",
            "detail",
        ])?;
        for r in log {
            w.write_record([
                r.subject_id.as_str(),
                r.status.as_str(),
                &r.sides_used.to_string(),
                &r.landmarks_complete.to_string(),
                &r.invalid_slots.to_string(),
                r.detail.as_str(),
            ])?;
        }
        w.flush()?;
    }
    crate::fsio::atomic_write(path, &buf)?;
    Ok(())
}
