//! Python bindings for the vascular age pipeline: cohort synthesis, feature
//! extraction, ranking, model training, and gap analytics, mirroring the
//! command-line stages but operating on in-memory objects.
//!
//! Compiled as the extension module `vascage._native`; the `vascage`
//! package re-exports everything under friendlier names.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use vascage_core::analytics::{self, CohortSplit, DEFAULT_AGE_MIN, DEFAULT_TRAIN_FRACTION};
use vascage_core::features::{self, FeatureMatrix, SubjectFeatures, HRV_NAMES};
use vascage_core::features::manifest::HEADLINE_FEATURES;
use vascage_core::ingest::{Group, QualityConfig};
use vascage_core::models::{self, ModelArtifact, ModelKind, TrainingSet};
use vascage_core::pipeline::{self, ExtractionRecord, PipelineError};
use vascage_core::ranking::{self, RankingResult, TOP_K};
use vascage_core::report;
use vascage_core::synth::{self, CohortConfig};
use vascage_core::beats;

fn input_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn pipeline_err(e: PipelineError) -> PyErr {
    match e {
        PipelineError::Io(io) => io.into(),
        other => input_err(other),
    }
}

fn model_err(e: models::ModelError) -> PyErr {
    match e {
        models::ModelError::Io(io) => io.into(),
        models::ModelError::Degenerate(d) => run_err(format!("Degenerate: {d}")),
        other => input_err(other),
    }
}

fn parse_cohort_config(config_json: Option<&str>, master_seed: u64) -> PyResult<CohortConfig> {
    let mut config = match config_json {
        None => CohortConfig::default(),
        Some(text) => serde_json::from_str(text).map_err(input_err)?,
    };
    config.master_seed = master_seed;
    Ok(config)
}

fn hrv_dict(values: [f64; 8]) -> BTreeMap<String, f64> {
    HRV_NAMES
        .iter()
        .map(|n| n.to_string())
        .zip(values)
        .collect()
}

/// One accepted subject's feature set.
#[pyclass(name = "SubjectFeatures", from_py_object)]
#[derive(Clone)]
struct PySubjectFeatures {
    inner: SubjectFeatures,
}

#[pymethods]
impl PySubjectFeatures {
    #[getter]
    fn subject_id(&self) -> String {
        self.inner.subject_id.clone()
    }

    #[getter]
    fn age(&self) -> f64 {
        self.inner.age
    }

    #[getter]
    fn group(&self) -> &'static str {
        self.inner.group.as_str()
    }

    #[getter]
    fn bmi(&self) -> f64 {
        self.inner.bmi
    }

    /// Pulse-morphology slot values in manifest order; invalid slots are
    /// `None` until matrix assembly imputes them.
    #[getter]
    fn pulse_values(&self) -> Vec<Option<f64>> {
        self.inner.pulse_values.clone()
    }

    #[getter]
    fn hrv(&self) -> BTreeMap<String, f64> {
        hrv_dict(self.inner.hrv.values())
    }

    fn __repr__(&self) -> String {
        format!(
            "SubjectFeatures(subject_id='{}', age={}, group='{}')",
            self.inner.subject_id,
            self.inner.age,
            self.inner.group.as_str()
        )
    }
}

/// One extraction-log line: what happened to one subject.
#[pyclass(name = "ExtractionRecord")]
struct PyExtractionRecord {
    inner: ExtractionRecord,
}

#[pymethods]
impl PyExtractionRecord {
    #[getter]
    fn subject_id(&self) -> String {
        self.inner.subject_id.clone()
    }

    #[getter]
    fn status(&self) -> String {
        self.inner.status.clone()
    }

    #[getter]
    fn sides_used(&self) -> usize {
        self.inner.sides_used
    }

    #[getter]
    fn landmarks_complete(&self) -> bool {
        self.inner.landmarks_complete
    }

    #[getter]
    fn invalid_slots(&self) -> usize {
        self.inner.invalid_slots
    }

    #[getter]
    fn detail(&self) -> String {
        self.inner.detail.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "ExtractionRecord(subject_id='{}', status='{}')",
            self.inner.subject_id, self.inner.status
        )
    }
}

/// Dense cohort feature matrix: manifest slots, BMI, then HRV, imputed.
#[pyclass(name = "FeatureMatrix")]
struct PyFeatureMatrix {
    inner: FeatureMatrix,
}

#[pymethods]
impl PyFeatureMatrix {
    /// Assemble the dense matrix from per-subject features, imputing
    /// invalid slots with the column mean.
    #[staticmethod]
    fn assemble(subjects: Vec<PySubjectFeatures>) -> Self {
        let core: Vec<SubjectFeatures> = subjects.into_iter().map(|s| s.inner).collect();
        PyFeatureMatrix {
            inner: features::assemble_matrix(&core),
        }
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names.clone()
    }

    #[getter]
    fn subject_ids(&self) -> Vec<String> {
        self.inner.subject_ids.clone()
    }

    #[getter]
    fn ages(&self) -> Vec<f64> {
        self.inner.ages.clone()
    }

    #[getter]
    fn groups(&self) -> Vec<&'static str> {
        self.inner.groups.iter().map(|g| g.as_str()).collect()
    }

    #[getter]
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.n_subjects()
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureMatrix({} subjects x {} features)",
            self.inner.n_subjects(),
            self.inner.n_features()
        )
    }
}

/// Feature ranking by variance of the per-group mean z-scores.
#[pyclass(name = "Ranking")]
struct PyRanking {
    inner: RankingResult,
}

#[pymethods]
impl PyRanking {
    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn scores(&self) -> Vec<f64> {
        self.inner.scores.clone()
    }

    #[getter]
    fn eligible(&self) -> Vec<bool> {
        self.inner.eligible.clone()
    }

    #[getter]
    fn groups(&self) -> Vec<&'static str> {
        self.inner.groups.iter().map(|g| g.as_str()).collect()
    }

    /// Per-group mean z-score, indexed `[group][feature]`.
    #[getter]
    fn group_means(&self) -> Vec<Vec<f64>> {
        self.inner.group_means.clone()
    }

    /// Column indices of the best features, descending score.
    #[getter]
    fn top(&self) -> Vec<usize> {
        self.inner.top.clone()
    }

    /// The best features as `(name, score)` pairs, descending score.
    fn top_features(&self) -> Vec<(String, f64)> {
        self.inner
            .top
            .iter()
            .map(|&j| (self.inner.feature_names[j].clone(), self.inner.scores[j]))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Ranking({} features, {} groups)",
            self.inner.feature_names.len(),
            self.inner.groups.len()
        )
    }
}

/// Stratified train/test division of the eligible healthy subjects.
#[pyclass(name = "Split")]
struct PySplit {
    inner: CohortSplit,
}

#[pymethods]
impl PySplit {
    #[getter]
    fn train(&self) -> Vec<String> {
        self.inner.train.clone()
    }

    #[getter]
    fn test(&self) -> Vec<String> {
        self.inner.test.clone()
    }

    #[getter]
    fn age_min(&self) -> f64 {
        self.inner.age_min
    }

    #[getter]
    fn train_fraction(&self) -> f64 {
        self.inner.train_fraction
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// `"train"`, `"test"`, or `"other"` for a subject id.
    fn role(&self, subject_id: &str) -> &'static str {
        self.inner.role(subject_id).as_str()
    }

    /// Write the split as JSON, interchangeable with the CLI's
    /// `split.json`.
    fn save(&self, path: &str) -> PyResult<()> {
        let mut bytes = serde_json::to_vec_pretty(&self.inner).map_err(run_err)?;
        bytes.push(b'\n');
        vascage_core::fsio::atomic_write(Path::new(path), &bytes)?;
        Ok(())
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let bytes = std::fs::read(path)?;
        let inner: CohortSplit = serde_json::from_slice(&bytes).map_err(input_err)?;
        Ok(PySplit { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Split({} train, {} test, seed={})",
            self.inner.train.len(),
            self.inner.test.len(),
            self.inner.seed
        )
    }
}

/// A trained age-regression model plus the feature list it expects.
#[pyclass(name = "Model")]
struct PyModel {
    inner: ModelArtifact,
}

#[pymethods]
impl PyModel {
    /// `"rf"`, `"gbt"`, or `"krr"`.
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    /// Predict ages for raw feature rows in the model's column order.
    fn predict_rows(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict_rows(&rows).map_err(model_err)
    }

    /// Predict ages for every subject of a matrix, refusing a matrix whose
    /// columns differ from the training features.
    fn predict_matrix(&self, matrix: &PyFeatureMatrix) -> PyResult<Vec<f64>> {
        self.inner
            .check_features(&matrix.inner.names)
            .map_err(model_err)?;
        self.inner.predict_rows(&matrix.inner.rows).map_err(model_err)
    }

    /// Write the versioned JSON artifact, interchangeable with the CLI's
    /// `model_<kind>.json`.
    fn save(&self, path: &str) -> PyResult<()> {
        models::save_artifact(Path::new(path), &self.inner).map_err(model_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: models::load_artifact(Path::new(path)).map_err(model_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(kind='{}', {} features)",
            self.inner.kind().as_str(),
            self.inner.feature_names.len()
        )
    }
}

/// One subject's brain-age gap: predicted minus chronological age.
#[pyclass(name = "GapRecord", from_py_object)]
#[derive(Clone)]
struct PyGapRecord {
    inner: analytics::GapRecord,
}

#[pymethods]
impl PyGapRecord {
    #[new]
    fn new(subject_id: String, group: &str, age: f64, predicted_age: f64) -> PyResult<Self> {
        let group: Group = serde_json::from_value(serde_json::Value::String(group.to_string()))
            .map_err(|_| input_err(format!("unknown group '{group}'")))?;
        Ok(PyGapRecord {
            inner: analytics::GapRecord::new(subject_id, group, age, predicted_age),
        })
    }

    #[getter]
    fn subject_id(&self) -> String {
        self.inner.subject_id.clone()
    }

    #[getter]
    fn group(&self) -> &'static str {
        self.inner.group.as_str()
    }

    #[getter]
    fn age(&self) -> f64 {
        self.inner.age
    }

    #[getter]
    fn predicted_age(&self) -> f64 {
        self.inner.predicted_age
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.inner.gap
    }

    fn __repr__(&self) -> String {
        format!(
            "GapRecord(subject_id='{}', gap={:.3})",
            self.inner.subject_id, self.inner.gap
        )
    }
}

/// All feature names in output order: 128 manifest slots, BMI, HRV.
#[pyfunction]
fn feature_names() -> Vec<String> {
    features::feature_column_names()
}

/// The 128 pulse-morphology manifest names.
#[pyfunction]
fn manifest_names() -> Vec<String> {
    features::feature_manifest_names()
}

/// The ten headline morphology features.
#[pyfunction]
fn headline_features() -> Vec<String> {
    HEADLINE_FEATURES.iter().map(|s| s.to_string()).collect()
}

/// Parse a feature name and return its canonical spelling; raises
/// ValueError for names outside the grammar.
#[pyfunction]
fn canonical_feature(name: &str) -> PyResult<String> {
    features::parse_feature(name)
        .map(|f| f.to_string())
        .map_err(input_err)
}

/// Evaluate every manifest feature on one pulse waveform. Returns a dict
/// from canonical name to value, `None` where a feature is undefined
/// (for example LT without a QRS reference).
#[pyfunction]
#[pyo3(signature = (samples, duration_s, qrs_reference_time_s=None))]
fn analyze_pulse(
    samples: Vec<f64>,
    duration_s: f64,
    qrs_reference_time_s: Option<f64>,
) -> BTreeMap<String, Option<f64>> {
    let analysis = features::analyze_pulse(&samples, duration_s, qrs_reference_time_s);
    features::manifest::feature_manifest()
        .into_iter()
        .map(|f| (f.to_string(), features::eval_feature(f, &analysis)))
        .collect()
}

/// The eight heart-rate-variability metrics of an NN-interval series (ms).
#[pyfunction]
fn hrv_metrics(nn_ms: Vec<f64>) -> PyResult<BTreeMap<String, f64>> {
    features::hrv_metrics(&nn_ms)
        .map(|m| hrv_dict(m.values()))
        .map_err(input_err)
}

/// R-peak sample indices of an ECG channel.
#[pyfunction]
fn detect_qrs(ecg: Vec<f64>, fs: f64) -> PyResult<Vec<usize>> {
    beats::detect_qrs(&ecg, fs).map_err(input_err)
}

/// NN intervals (ms) between consecutive R-peaks.
#[pyfunction]
fn rr_intervals(r_peaks: Vec<usize>, fs: f64) -> PyResult<Vec<f64>> {
    beats::rr_intervals(&r_peaks, fs).map_err(input_err)
}

/// Pulse-onset sample indices of a CBFV channel.
#[pyfunction]
fn detect_pulse_onsets(cbfv: Vec<f64>, fs: f64) -> PyResult<Vec<usize>> {
    beats::detect_pulse_onsets(&cbfv, fs).map_err(input_err)
}

/// Generate a synthetic cohort on disk: per-subject recordings, a
/// manifest, the resolved config, and the ground truth. Returns the
/// number of subjects written.
#[pyfunction]
#[pyo3(signature = (out_dir, master_seed, config_json=None))]
fn synth_cohort(out_dir: &str, master_seed: u64, config_json: Option<&str>) -> PyResult<usize> {
    let config = parse_cohort_config(config_json, master_seed)?;
    let truth = synth::synth_cohort(&config, Path::new(out_dir)).map_err(input_err)?;
    Ok(truth.subjects.len())
}

fn wrap_extractions(
    extractions: Vec<pipeline::SubjectExtraction>,
) -> (Vec<PySubjectFeatures>, Vec<PyExtractionRecord>) {
    let subjects = extractions
        .iter()
        .filter_map(|e| e.features.clone())
        .map(|inner| PySubjectFeatures { inner })
        .collect();
    let log = extractions
        .into_iter()
        .map(|e| PyExtractionRecord { inner: e.record })
        .collect();
    (subjects, log)
}

/// Generate a synthetic cohort in memory and run it straight through
/// feature extraction. Returns `(subjects, log)`: the accepted subjects'
/// features and the full extraction log.
#[pyfunction]
#[pyo3(signature = (master_seed, config_json=None))]
fn synth_features(
    master_seed: u64,
    config_json: Option<&str>,
) -> PyResult<(Vec<PySubjectFeatures>, Vec<PyExtractionRecord>)> {
    let config = parse_cohort_config(config_json, master_seed)?;
    let specs = synth::plan_cohort(&config).map_err(input_err)?;
    let quality = QualityConfig::default();
    let extractions = specs
        .iter()
        .map(|spec| {
            let (rec, _) = synth::synth_recording(spec, config.duration_for(spec), 400.0)
                .map_err(run_err)?;
            Ok(pipeline::extract_subject(&rec, &quality))
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok(wrap_extractions(extractions))
}

/// Run every subject of a cohort manifest through feature extraction.
/// Returns `(subjects, log)` like `synth_features`.
#[pyfunction]
fn extract_cohort(
    manifest_path: &str,
) -> PyResult<(Vec<PySubjectFeatures>, Vec<PyExtractionRecord>)> {
    let cohort = pipeline::extract_cohort(Path::new(manifest_path), &QualityConfig::default())
        .map_err(pipeline_err)?;
    let subjects = cohort
        .subjects()
        .into_iter()
        .map(|inner| PySubjectFeatures { inner })
        .collect();
    let log = cohort
        .log()
        .into_iter()
        .map(|inner| PyExtractionRecord { inner })
        .collect();
    Ok((subjects, log))
}

/// Rank matrix columns by group-mean variance, keeping the `top_k` best.
#[pyfunction]
#[pyo3(signature = (matrix, top_k=TOP_K))]
fn rank_features(matrix: &PyFeatureMatrix, top_k: usize) -> PyResult<PyRanking> {
    ranking::rank_features_k(&matrix.inner, top_k)
        .map(|inner| PyRanking { inner })
        .map_err(input_err)
}

/// Split the healthy subjects older than `age_min` into train and test
/// sets, stratified by 5-year age bin.
#[pyfunction]
#[pyo3(signature = (matrix, seed, age_min=DEFAULT_AGE_MIN, train_fraction=DEFAULT_TRAIN_FRACTION))]
fn split_healthy(
    matrix: &PyFeatureMatrix,
    seed: u64,
    age_min: f64,
    train_fraction: f64,
) -> PyResult<PySplit> {
    analytics::split_healthy(
        &matrix.inner.subject_ids,
        &matrix.inner.ages,
        &matrix.inner.groups,
        age_min,
        train_fraction,
        seed,
    )
    .map(|inner| PySplit { inner })
    .map_err(input_err)
}

/// Train one model kind on the listed subjects with age-balanced sample
/// weights. `kind` is `"rf"`, `"gbt"`, or `"krr"`.
#[pyfunction]
fn train_model(
    kind: &str,
    matrix: &PyFeatureMatrix,
    train_ids: Vec<String>,
    seed: u64,
) -> PyResult<PyModel> {
    let kind: ModelKind = kind.parse().map_err(input_err)?;
    let index: BTreeMap<&str, usize> = matrix
        .inner
        .subject_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut x = Vec::with_capacity(train_ids.len());
    let mut y = Vec::with_capacity(train_ids.len());
    for id in &train_ids {
        let &i = index
            .get(id.as_str())
            .ok_or_else(|| input_err(format!("subject '{id}' is not in the matrix")))?;
        x.push(matrix.inner.rows[i].clone());
        y.push(matrix.inner.ages[i]);
    }
    let ts = TrainingSet::balanced(x, y, matrix.inner.names.clone()).map_err(model_err)?;
    models::train(kind, &ts, seed)
        .map(|inner| PyModel { inner })
        .map_err(model_err)
}

/// Predict every subject of a matrix and return one gap record each.
#[pyfunction]
fn compute_gaps(model: &PyModel, matrix: &PyFeatureMatrix) -> PyResult<Vec<PyGapRecord>> {
    let preds = model.predict_matrix(matrix)?;
    Ok(matrix
        .inner
        .subject_ids
        .iter()
        .zip(&matrix.inner.groups)
        .zip(matrix.inner.ages.iter().zip(&preds))
        .map(|((id, &group), (&age, &pred))| PyGapRecord {
            inner: analytics::GapRecord::new(id.clone(), group, age, pred),
        })
        .collect())
}

fn collect_report(
    gaps: BTreeMap<String, Vec<PyGapRecord>>,
    split: &PySplit,
    config_json: Option<&str>,
) -> PyResult<report::Report> {
    let records: BTreeMap<String, Vec<analytics::GapRecord>> = gaps
        .into_iter()
        .map(|(model, recs)| (model, recs.into_iter().map(|r| r.inner).collect()))
        .collect();
    let config = match config_json {
        None => serde_json::Value::Null,
        Some(text) => serde_json::from_str(text).map_err(input_err)?,
    };
    report::build_report(&records, &split.inner, config).map_err(input_err)
}

/// Summarize gap records into the report structure and return it as a
/// JSON string. `gaps` maps a model label to that model's gap records.
#[pyfunction]
#[pyo3(signature = (gaps, split, config_json=None))]
fn build_report_json(
    gaps: BTreeMap<String, Vec<PyGapRecord>>,
    split: &PySplit,
    config_json: Option<&str>,
) -> PyResult<String> {
    let report = collect_report(gaps, split, config_json)?;
    serde_json::to_string_pretty(&report).map_err(run_err)
}

/// Summarize gap records and write the full report bundle (report.json
/// plus the CSV tables) into a directory, like the CLI's `report` stage.
#[pyfunction]
#[pyo3(signature = (out_dir, gaps, split, config_json=None))]
fn write_report_bundle(
    out_dir: &str,
    gaps: BTreeMap<String, Vec<PyGapRecord>>,
    split: &PySplit,
    config_json: Option<&str>,
) -> PyResult<()> {
    let report = collect_report(gaps, split, config_json)?;
    report::write_report(Path::new(out_dir), &report)?;
    Ok(())
}

#[pymodule]
fn _native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySubjectFeatures>()?;
    m.add_class::<PyExtractionRecord>()?;
    m.add_class::<PyFeatureMatrix>()?;
    m.add_class::<PyRanking>()?;
    m.add_class::<PySplit>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyGapRecord>()?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(manifest_names, m)?)?;
    m.add_function(wrap_pyfunction!(headline_features, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_feature, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_pulse, m)?)?;
    m.add_function(wrap_pyfunction!(hrv_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(detect_qrs, m)?)?;
    m.add_function(wrap_pyfunction!(rr_intervals, m)?)?;
    m.add_function(wrap_pyfunction!(detect_pulse_onsets, m)?)?;
    m.add_function(wrap_pyfunction!(synth_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(synth_features, m)?)?;
    m.add_function(wrap_pyfunction!(extract_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(rank_features, m)?)?;
    m.add_function(wrap_pyfunction!(split_healthy, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(compute_gaps, m)?)?;
    m.add_function(wrap_pyfunction!(build_report_json, m)?)?;
    m.add_function(wrap_pyfunction!(write_report_bundle, m)?)?;
    Ok(())
}
