//! Morphology feature extraction: naming grammar, the canonical manifest,
//! landmark detection, per-pulse evaluation, HRV metrics, and assembly of
//! per-subject vectors into a dense feature matrix.

pub mod eval;
pub mod grammar;
pub mod hrv;
pub mod landmarks;
pub mod manifest;

pub use eval::{analyze_dominant_pulse, analyze_pulse, eval_feature, PulseAnalysis};
pub use grammar::{parse_feature, Delay, Feature, Landmark, ParseError};
pub use hrv::{hrv_metrics, HrvError, HrvMetrics, HRV_NAMES};
pub use landmarks::{detect_landmarks, LandmarkError, LandmarkPoint, LandmarkSet, SMOOTH_WINDOW};
pub use manifest::{feature_manifest, feature_manifest_names, MANIFEST_LEN};

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::fsio::atomic_write;
use crate::ingest::Group;

/// Fraction of manifest slots allowed to be invalid before a subject is
/// rejected.
pub const MAX_INVALID_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("BadHeader: {0}")]
    BadHeader(String),
    #[error("BadValue: line {line}, column {column}: {detail}")]
    BadValue {
        line: usize,
        column: String,
        detail: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Evaluate every manifest feature against one pulse analysis.
pub fn eval_manifest(a: &PulseAnalysis) -> Vec<Option<f64>> {
    feature_manifest().iter().map(|&f| eval_feature(f, a)).collect()
}

/// Merge per-side slot values. A side whose landmark detection failed
/// contributes nothing and is passed as `None`. With both sides present a
/// slot is the mean of the two and is valid only when valid on both; with
/// one side, that side's slots are taken as-is; with none, there is no
/// vector to build.
pub fn combine_sides(
    left: Option<&[Option<f64>]>,
    right: Option<&[Option<f64>]>,
) -> Option<Vec<Option<f64>>> {
    match (left, right) {
        (Some(l), Some(r)) => Some(
            l.iter()
                .zip(r)
                .map(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) => Some((a + b) / 2.0),
                    _ => None,
                })
                .collect(),
        ),
        (Some(l), None) => Some(l.to_vec()),
        (None, Some(r)) => Some(r.to_vec()),
        (None, None) => None,
    }
}

/// Subject-level validity of an extracted feature vector.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ValidityReport {
    /// All six landmarks found on at least one side.
    pub landmarks_complete: bool,
    pub invalid_slots: usize,
    pub max_invalid_slots: usize,
    pub valid: bool,
}

/// Check a combined slot vector: a subject is kept when the landmark set
/// is complete on some side and at most 5% of manifest slots are invalid.
pub fn validity_check(landmarks_complete: bool, values: &[Option<f64>]) -> ValidityReport {
    let invalid_slots = values.iter().filter(|v| v.is_none()).count();
    let max_invalid_slots = (MAX_INVALID_FRACTION * values.len() as f64).floor() as usize;
    ValidityReport {
        landmarks_complete,
        invalid_slots,
        max_invalid_slots,
        valid: landmarks_complete && invalid_slots <= max_invalid_slots,
    }
}

/// One subject's extracted features before matrix assembly.
#[derive(Debug, Clone)]
pub struct SubjectFeatures {
    pub subject_id: String,
    pub age: f64,
    pub group: Group,
    /// Manifest slot values; `None` slots are imputed at assembly.
    pub pulse_values: Vec<Option<f64>>,
    pub bmi: f64,
    pub hrv: HrvMetrics,
}

/// Dense per-subject feature matrix: 128 manifest slots, BMI, then the
/// eight HRV metrics, all fully imputed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub subject_ids: Vec<String>,
    pub ages: Vec<f64>,
    pub groups: Vec<Group>,
    pub rows: Vec<Vec<f64>>,
}

/// All column names in output order: manifest, BMI, HRV.
pub fn feature_column_names() -> Vec<String> {
    let mut names = feature_manifest_names();
    names.push("BMI".into());
    names.extend(HRV_NAMES.iter().map(|s| s.to_string()));
    names
}

impl FeatureMatrix {
    pub fn n_subjects(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Build the dense matrix. Remaining invalid slots are replaced by the
/// column mean over subjects that do have the value; a column with no
/// values at all becomes zero.
pub fn assemble_matrix(subjects: &[SubjectFeatures]) -> FeatureMatrix {
    let names = feature_column_names();
    let slots = MANIFEST_LEN;
    let mut col_sum = vec![0.0; slots];
    let mut col_count = vec![0usize; slots];
    for s in subjects {
        for (j, v) in s.pulse_values.iter().enumerate() {
            if let Some(v) = v {
                col_sum[j] += v;
                col_count[j] += 1;
            }
        }
    }
    let col_mean: Vec<f64> = (0..slots)
        .map(|j| {
            if col_count[j] == 0 {
                0.0
            } else {
                col_sum[j] / col_count[j] as f64
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(subjects.len());
    for s in subjects {
        let mut row: Vec<f64> = s
            .pulse_values
            .iter()
            .enumerate()
            .map(|(j, v)| v.unwrap_or(col_mean[j]))
            .collect();
        row.push(s.bmi);
        row.extend(s.hrv.values());
        rows.push(row);
    }
    FeatureMatrix {
        names,
        subject_ids: subjects.iter().map(|s| s.subject_id.clone()).collect(),
        ages: subjects.iter().map(|s| s.age).collect(),
        groups: subjects.iter().map(|s| s.group).collect(),
        rows,
    }
}

/// Write the feature matrix as CSV: `subject_id` then one column per
/// feature, floats in shortest round-trip form.
pub fn write_features_csv(path: &Path, m: &FeatureMatrix) -> Result<(), FeatureError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["subject_id".to_string()];
        header.extend(m.names.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in m.rows.iter().enumerate() {
            let mut rec = vec![m.subject_ids[i].clone()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    atomic_write(path, &buf)?;
    Ok(())
}

/// Companion per-subject metadata table.
pub fn write_subjects_csv(path: &Path, m: &FeatureMatrix) -> Result<(), FeatureError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["subject_id", "age", "group"])?;
        for i in 0..m.n_subjects() {
            w.write_record([
                m.subject_ids[i].as_str(),
                &format!("{}", m.ages[i]),
                m.groups[i].as_str(),
            ])?;
        }
        w.flush()?;
    }
    atomic_write(path, &buf)?;
    Ok(())
}

/// Read a feature matrix written by [`write_features_csv`], joining ages
/// and groups from the subjects table written by [`write_subjects_csv`].
pub fn read_features_csv(
    features_path: &Path,
    subjects_path: &Path,
) -> Result<FeatureMatrix, FeatureError> {
    let mut meta: HashMap<String, (f64, Group)> = HashMap::new();
    let mut rdr = csv::Reader::from_path(subjects_path)?;
    {
        let hdr = rdr.headers()?;
        let want = ["subject_id", "age", "group"];
        if hdr.len() != want.len() || hdr.iter().zip(want).any(|(a, b)| a != b) {
            return Err(FeatureError::BadHeader(format!(
                "subjects header {:?}, expected {:?}",
                hdr, want
            )));
        }
    }
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let id = record.get(0).unwrap_or_default().to_string();
        let age: f64 = record
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|e| FeatureError::BadValue {
                line,
                column: "age".into(),
                detail: format!("{e}"),
            })?;
        let group: Group = record
            .get(2)
            .unwrap_or_default()
            .parse()
            .map_err(|e: String| FeatureError::BadValue {
                line,
                column: "group".into(),
                detail: e,
            })?;
        meta.insert(id, (age, group));
    }

    let mut rdr = csv::Reader::from_path(features_path)?;
    let names: Vec<String> = {
        let hdr = rdr.headers()?;
        if hdr.get(0) != Some("subject_id") {
            return Err(FeatureError::BadHeader(
                "features header must start with subject_id".into(),
            ));
        }
        hdr.iter().skip(1).map(|s| s.to_string()).collect()
    };
    let mut subject_ids = Vec::new();
    let mut ages = Vec::new();
    let mut groups = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let id = record.get(0).unwrap_or_default().to_string();
        let mut row = Vec::with_capacity(names.len());
        for (j, raw) in record.iter().skip(1).enumerate() {
            let v: f64 = raw.parse().map_err(|e| FeatureError::BadValue {
                line,
                column: names.get(j).cloned().unwrap_or_default(),
                detail: format!("{e}"),
            })?;
            if !v.is_finite() {
                return Err(FeatureError::BadValue {
                    line,
                    column: names.get(j).cloned().unwrap_or_default(),
                    detail: "non-finite value".into(),
                });
            }
            row.push(v);
        }
        if row.len() != names.len() {
            return Err(FeatureError::BadValue {
                line,
                column: "<row>".into(),
                detail: format!("expected {} values, got {}", names.len(), row.len()),
            });
        }
        let &(age, group) = meta.get(&id).ok_or_else(|| FeatureError::BadValue {
            line,
            column: "subject_id".into(),
            detail: format!("{id} not present in subjects table"),
        })?;
        subject_ids.push(id);
        ages.push(age);
        groups.push(group);
        rows.push(row);
    }
    Ok(FeatureMatrix {
        names,
        subject_ids,
        ages,
        groups,
        rows,
    })
}
