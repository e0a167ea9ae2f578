//! Age-regression models over selected feature columns: a random forest,
//! gradient-boosted trees, and kernel ridge regression, all trained with
//! age-balanced sample weights and serialized as versioned JSON artifacts
//! that pin the exact feature list they were trained on.

pub mod forest;
pub mod gbt;
pub mod kernel;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsio::atomic_write;

pub use forest::ForestModel;
pub use gbt::GbtModel;
pub use kernel::KrrModel;

/// Artifact schema version.
pub const FORMAT_VERSION: u32 = 1;
/// Fewest samples a model may be trained on.
pub const MIN_TRAIN: usize = 20;
/// Width of an age bin for balancing, years.
pub const AGE_BIN_YEARS: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("TooFewSamples: {got}, need ≥ {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("BadWeights: {0}")]
    BadWeights(String),
    #[error("Degenerate: {0}")]
    Degenerate(String),
    #[error("FeatureMismatch: model fingerprint {expected}, data fingerprint {found}")]
    FeatureMismatch { expected: String, found: String },
    #[error("UnsupportedVersion: artifact version {found}, supported {FORMAT_VERSION}")]
    UnsupportedVersion { found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Which regressor an artifact holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "rf")]
    Forest,
    #[serde(rename = "gbt")]
    Gbt,
    #[serde(rename = "krr")]
    Krr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Forest, ModelKind::Gbt, ModelKind::Krr];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Forest => "rf",
            ModelKind::Gbt => "gbt",
            ModelKind::Krr => "krr",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown model kind {s:?}, expected rf, gbt, or krr"))
    }
}

/// Weight every 5-year age bin equally: w = n / (B · bin count), where B
/// is the number of occupied bins. Weights sum to n by construction.
pub fn balanced_weights(ages: &[f64]) -> Vec<f64> {
    let mut counts: std::collections::BTreeMap<i64, usize> = Default::default();
    let bin = |age: f64| (age / AGE_BIN_YEARS).floor() as i64;
    for &a in ages {
        *counts.entry(bin(a)).or_default() += 1;
    }
    let n = ages.len() as f64;
    let b = counts.len() as f64;
    ages.iter()
        .map(|&a| n / (b * counts[&bin(a)] as f64))
        .collect()
}

/// Inputs to a training run: feature rows, target ages, positive sample
/// weights normalized to sum to n, and the column names for the
/// fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl TrainingSet {
    pub fn new(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        w: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self, ModelError> {
        let n = x.len();
        if n < MIN_TRAIN {
            return Err(ModelError::TooFewSamples {
                got: n,
                need: MIN_TRAIN,
            });
        }
        if y.len() != n || w.len() != n {
            return Err(ModelError::DimensionMismatch(format!(
                "{n} rows, {} targets, {} weights",
                y.len(),
                w.len()
            )));
        }
        let p = feature_names.len();
        if let Some(row) = x.iter().find(|r| r.len() != p) {
            return Err(ModelError::DimensionMismatch(format!(
                "row with {} values, {p} feature names",
                row.len()
            )));
        }
        if w.iter().any(|&wi| !(wi > 0.0) || !wi.is_finite()) {
            return Err(ModelError::BadWeights(
                "weights must be positive and finite".into(),
            ));
        }
        let total: f64 = w.iter().sum();
        let scale = n as f64 / total;
        let w = w.into_iter().map(|wi| wi * scale).collect();
        Ok(TrainingSet {
            x,
            y,
            w,
            feature_names,
        })
    }

    /// Build a set with age-balanced weights.
    pub fn balanced(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self, ModelError> {
        let w = balanced_weights(&y);
        Self::new(x, y, w, feature_names)
    }
}

/// FNV-1a over the newline-joined feature names, as fixed-width hex.
pub fn feature_fingerprint(names: &[String]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |byte: u8| {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for name in names {
        for &b in name.as_bytes() {
            mix(b);
        }
        mix(b'\n');
    }
    format!("{h:016x}")
}

/// Kind-specific parameters, tagged so artifacts are self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelParams {
    #[serde(rename = "rf")]
    Forest(ForestModel),
    #[serde(rename = "gbt")]
    Gbt(GbtModel),
    #[serde(rename = "krr")]
    Krr(KrrModel),
}

/// A trained model plus everything needed to refuse mismatched inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub feature_fingerprint: String,
    pub model: ModelParams,
}

impl ModelArtifact {
    pub fn kind(&self) -> ModelKind {
        match self.model {
            ModelParams::Forest(_) => ModelKind::Forest,
            ModelParams::Gbt(_) => ModelKind::Gbt,
            ModelParams::Krr(_) => ModelKind::Krr,
        }
    }

    /// Error unless `names` matches the training feature list exactly.
    pub fn check_features(&self, names: &[String]) -> Result<(), ModelError> {
        let found = feature_fingerprint(names);
        if found != self.feature_fingerprint {
            return Err(ModelError::FeatureMismatch {
                expected: self.feature_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64, ModelError> {
        if row.len() != self.feature_names.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.feature_names.len()
            )));
        }
        Ok(match &self.model {
            ModelParams::Forest(m) => m.predict(row),
            ModelParams::Gbt(m) => m.predict(row),
            ModelParams::Krr(m) => m.predict(row),
        })
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

/// Train one model kind; `seed` only drives the forest bootstrap.
pub fn train(kind: ModelKind, ts: &TrainingSet, seed: u64) -> Result<ModelArtifact, ModelError> {
    let model = match kind {
        ModelKind::Forest => ModelParams::Forest(forest::train_forest(&ts.x, &ts.y, &ts.w, seed)),
        ModelKind::Gbt => ModelParams::Gbt(gbt::train_gbt(&ts.x, &ts.y, &ts.w)),
        ModelKind::Krr => ModelParams::Krr(kernel::train_krr_auto(&ts.x, &ts.y, &ts.w)?),
    };
    Ok(ModelArtifact {
        format_version: FORMAT_VERSION,
        feature_names: ts.feature_names.clone(),
        feature_fingerprint: feature_fingerprint(&ts.feature_names),
        model,
    })
}

/// Serialize an artifact to canonical JSON bytes (newline-terminated).
pub fn artifact_to_json(artifact: &ModelArtifact) -> Result<Vec<u8>, ModelError> {
    let mut bytes = serde_json::to_vec(artifact)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn save_artifact(path: &Path, artifact: &ModelArtifact) -> Result<(), ModelError> {
    atomic_write(path, &artifact_to_json(artifact)?)?;
    Ok(())
}

pub fn load_artifact(path: &Path) -> Result<ModelArtifact, ModelError> {
    let bytes = std::fs::read(path)?;
    let artifact: ModelArtifact = serde_json::from_slice(&bytes)?;
    if artifact.format_version != FORMAT_VERSION {
        return Err(ModelError::UnsupportedVersion {
            found: artifact.format_version,
        });
    }
    Ok(artifact)
}
