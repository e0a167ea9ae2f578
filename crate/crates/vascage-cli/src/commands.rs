//! Subcommand implementations over the file interfaces.
//!
//! Errors split into two classes: input errors (exit 2) for anything wrong
//! with arguments, config, or input files, and pipeline errors (exit 3)
//! for failures while computing or writing results. Every message is a
//! single line so harnesses can match on it.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use vascage_core::analytics::{split_healthy, CohortSplit, GapRecord};
use vascage_core::features::{
    assemble_matrix, feature_manifest_names, read_features_csv, write_features_csv,
    write_subjects_csv, FeatureMatrix,
};
use vascage_core::fsio::atomic_write;
use vascage_core::ingest::{Group, QualityConfig};
use vascage_core::models::{load_artifact, save_artifact, train, ModelKind, TrainingSet};
use vascage_core::pipeline::{extract_cohort, write_extraction_log, PipelineError};
use vascage_core::ranking::rank_features_k;
use vascage_core::report::{build_report, write_report};
use vascage_core::synth::{synth_cohort, CohortConfig, SynthError};

use crate::config::{resolve_seed, LoadedConfig};

/// A command failure with its exit class.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation, config, or input file: exit code 2.
    Input(String),
    /// Failure while computing or writing outputs: exit code 3.
    Pipeline(String),
}

impl CliError {
    pub fn input(msg: impl std::fmt::Display) -> Self {
        CliError::Input(one_line(msg))
    }

    pub fn pipeline(msg: impl std::fmt::Display) -> Self {
        CliError::Pipeline(one_line(msg))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Pipeline(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Pipeline(m) => f.write_str(m),
        }
    }
}

fn one_line(msg: impl std::fmt::Display) -> String {
    msg.to_string().replace('\n', " | ")
}

/// Generate a synthetic cohort with ground truth into `out`.
pub fn cmd_synth(cfg: &LoadedConfig, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let seed = resolve_seed(cfg.run.seeds.master, seed, "master")?;
    let mut cc: CohortConfig = serde_json::from_value(cfg.run.synth.clone())
        .map_err(|e| CliError::input(format!("ConfigInvalid: synth: {e}")))?;
    cc.master_seed = seed;
    let truth = synth_cohort(&cc, out).map_err(|e| match e {
        SynthError::InvalidConfig(_) | SynthError::DurationTooShort { .. } => CliError::input(e),
        other => CliError::pipeline(other),
    })?;
    println!("synth: {} subjects -> {}", truth.subjects.len(), out.display());
    Ok(())
}

fn classify_pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::Io(_) => CliError::pipeline(e),
        _ => CliError::input(e),
    }
}

/// Extract the feature matrix from a cohort manifest into `out`.
pub fn cmd_extract(cfg: &LoadedConfig, manifest: &Path, out: &Path) -> Result<(), CliError> {
    let result =
        extract_cohort(manifest, &QualityConfig::default()).map_err(classify_pipeline_error)?;
    let subjects = result.subjects();
    let matrix = assemble_matrix(&subjects);
    write_features_csv(&out.join("features.csv"), &matrix).map_err(CliError::pipeline)?;
    write_subjects_csv(&out.join("subjects.csv"), &matrix).map_err(CliError::pipeline)?;
    write_extraction_log(&out.join("extraction_log.csv"), &result.log())
        .map_err(CliError::pipeline)?;

    if cfg.run.dump_beats || cfg.run.dump_pulses {
        for e in &result.extractions {
            for a in &e.artifacts {
                let stem = format!("{}_{}", e.record.subject_id, a.side.as_str());
                if cfg.run.dump_beats && !a.onsets.is_empty() {
                    let mut text = String::from("onset_sample\n");
                    for &o in &a.onsets {
                        text.push_str(&format!("{o}\n"));
                    }
                    atomic_write(&out.join("beats").join(format!("{stem}.csv")), text.as_bytes())
                        .map_err(CliError::pipeline)?;
                }
                if cfg.run.dump_pulses {
                    if let Some(p) = &a.pulse {
                        let mut text = String::from("sample,value\n");
                        for (g, v) in p.samples.iter().enumerate() {
                            text.push_str(&format!("{g},{v}\n"));
                        }
                        atomic_write(
                            &out.join("pulses").join(format!("{stem}.csv")),
                            text.as_bytes(),
                        )
                        .map_err(CliError::pipeline)?;
                    }
                }
            }
        }
    }
    println!(
        "extract: {}/{} accepted -> {}",
        subjects.len(),
        result.extractions.len(),
        out.display()
    );
    Ok(())
}

fn load_matrix(features: &Path, subjects: &Path) -> Result<FeatureMatrix, CliError> {
    read_features_csv(features, subjects).map_err(CliError::input)
}

/// Rank features by between-group variance of group-mean z-scores.
pub fn cmd_rank(
    cfg: &LoadedConfig,
    features: &Path,
    subjects: &Path,
    top_k: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let matrix = load_matrix(features, subjects)?;
    let k = top_k.unwrap_or(cfg.run.top_k);
    let ranking = rank_features_k(&matrix, k).map_err(CliError::input)?;

    let mut rank_csv = String::from("rank,feature,score\n");
    let mut top_json = Vec::new();
    for (i, &j) in ranking.top.iter().enumerate() {
        rank_csv.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            ranking.feature_names[j],
            ranking.scores[j]
        ));
        top_json.push(serde_json::json!({
            "rank": i + 1,
            "feature": ranking.feature_names[j],
            "score": ranking.scores[j],
        }));
    }
    atomic_write(&out.join("rank.csv"), rank_csv.as_bytes()).map_err(CliError::pipeline)?;

    let group_labels: Vec<&str> = ranking.groups.iter().map(|g| g.as_str()).collect();
    let mut means_csv = format!("feature,{}\n", group_labels.join(","));
    for j in 0..ranking.feature_names.len() {
        means_csv.push_str(&ranking.feature_names[j]);
        for gm in &ranking.group_means {
            means_csv.push_str(&format!(",{}", gm[j]));
        }
        means_csv.push('\n');
    }
    atomic_write(&out.join("group_means.csv"), means_csv.as_bytes())
        .map_err(CliError::pipeline)?;

    let summary = serde_json::json!({
        "top_k": k,
        "groups": group_labels,
        "top": top_json,
    });
    let mut json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    json.push(b'\n');
    atomic_write(&out.join("rank.json"), &json).map_err(CliError::pipeline)?;

    println!(
        "rank: top {} of {} features -> {}",
        ranking.top.len(),
        ranking.feature_names.len(),
        out.display()
    );
    Ok(())
}

/// Split the healthy cohort, train every configured model kind, and write
/// the artifacts plus the split itself.
pub fn cmd_train(
    cfg: &LoadedConfig,
    seed: Option<u64>,
    features: &Path,
    subjects: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let split_seed = resolve_seed(cfg.run.seeds.split, seed, "split")?;
    let model_seed = resolve_seed(cfg.run.seeds.model, seed, "model")?;
    let matrix = load_matrix(features, subjects)?;

    let split = split_healthy(
        &matrix.subject_ids,
        &matrix.ages,
        &matrix.groups,
        cfg.run.age_min,
        cfg.run.train_fraction,
        split_seed,
    )
    .map_err(CliError::input)?;
    let mut split_json = serde_json::to_vec_pretty(&split).expect("split serializes");
    split_json.push(b'\n');
    atomic_write(&out.join("split.json"), &split_json).map_err(CliError::pipeline)?;

    let index: HashMap<&str, usize> = matrix
        .subject_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut x = Vec::with_capacity(split.train.len());
    let mut y = Vec::with_capacity(split.train.len());
    for id in &split.train {
        let &i = index.get(id.as_str()).expect("split ids come from the matrix");
        x.push(matrix.rows[i].clone());
        y.push(matrix.ages[i]);
    }
    let ts = TrainingSet::balanced(x, y, matrix.names.clone()).map_err(CliError::input)?;

    let mut kinds = Vec::new();
    for name in &cfg.run.models {
        let kind: ModelKind = name.parse().map_err(CliError::input)?;
        let artifact = train(kind, &ts, model_seed).map_err(CliError::pipeline)?;
        save_artifact(&out.join(format!("model_{}.json", kind.as_str())), &artifact)
            .map_err(CliError::pipeline)?;
        kinds.push(kind.as_str());
    }
    println!(
        "train: {} on {} healthy subjects -> {}",
        kinds.join(","),
        split.train.len(),
        out.display()
    );
    Ok(())
}

/// Gaps file column order, shared by `evaluate` (writer) and `report`
/// (reader).
pub const GAPS_HEADER: [&str; 7] = [
    "model",
    "subject_id",
    "group",
    "role",
    "age",
    "predicted_age",
    "gap",
];

/// Predict every subject with one model and write the per-subject gaps.
pub fn cmd_evaluate(
    model: &Path,
    features: &Path,
    subjects: &Path,
    split: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let artifact = load_artifact(model).map_err(CliError::input)?;
    let matrix = load_matrix(features, subjects)?;
    artifact.check_features(&matrix.names).map_err(CliError::input)?;
    let split = read_split(split)?;
    let preds = artifact.predict_rows(&matrix.rows).map_err(CliError::pipeline)?;

    let kind = artifact.kind().as_str();
    let mut text = format!("{}\n", GAPS_HEADER.join(","));
    for i in 0..matrix.n_subjects() {
        let id = &matrix.subject_ids[i];
        let gap = preds[i] - matrix.ages[i];
        text.push_str(&format!(
            "{kind},{id},{},{},{},{},{}\n",
            matrix.groups[i].as_str(),
            split.role(id).as_str(),
            matrix.ages[i],
            preds[i],
            gap
        ));
    }
    let path = out.join(format!("gaps_{kind}.csv"));
    atomic_write(&path, text.as_bytes()).map_err(CliError::pipeline)?;
    println!(
        "evaluate: {kind} on {} subjects -> {}",
        matrix.n_subjects(),
        path.display()
    );
    Ok(())
}

fn read_split(path: &Path) -> Result<CohortSplit, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("SplitUnreadable: {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("SplitInvalid: {e}")))
}

/// Parse one gaps file into per-model records.
fn read_gaps(
    path: &Path,
    records: &mut BTreeMap<String, Vec<GapRecord>>,
) -> Result<(), CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::input(format!("GapsUnreadable: {}: {e}", path.display())))?;
    let hdr: Vec<String> = rdr
        .headers()
        .map_err(CliError::input)?
        .iter()
        .map(String::from)
        .collect();
    if hdr != GAPS_HEADER {
        return Err(CliError::input(format!(
            "GapsInvalid: {}: header {:?}",
            path.display(),
            hdr.join(",")
        )));
    }
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(CliError::input)?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let bad = |what: &str, detail: String| {
            CliError::input(format!(
                "GapsInvalid: {}: line {}: {what}: {detail}",
                path.display(),
                line + 2
            ))
        };
        let group: Group = field(2).parse().map_err(|e: String| bad("group", e))?;
        let age: f64 = field(4).parse().map_err(|e| bad("age", format!("{e}")))?;
        let predicted: f64 = field(5)
            .parse()
            .map_err(|e| bad("predicted_age", format!("{e}")))?;
        let gap: f64 = field(6).parse().map_err(|e| bad("gap", format!("{e}")))?;
        let rec = GapRecord::new(field(1).to_string(), group, age, predicted);
        if (gap - rec.gap).abs() > 1e-9 {
            return Err(bad(
                "gap",
                format!("{gap} does not equal predicted_age - age = {}", rec.gap),
            ));
        }
        records.entry(field(0).to_string()).or_default().push(rec);
    }
    Ok(())
}

/// Summarise one or more gaps files into the report bundle.
pub fn cmd_report(
    cfg: &LoadedConfig,
    gaps: &[PathBuf],
    split: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let split = read_split(split)?;
    let mut records: BTreeMap<String, Vec<GapRecord>> = BTreeMap::new();
    for path in gaps {
        read_gaps(path, &mut records)?;
    }
    if records.is_empty() {
        return Err(CliError::input("GapsInvalid: no gap records given"));
    }
    let report =
        build_report(&records, &split, cfg.raw.clone()).map_err(CliError::pipeline)?;
    write_report(out, &report).map_err(CliError::pipeline)?;
    println!("report: {} models -> {}", records.len(), out.display());
    Ok(())
}

/// Print the canonical feature manifest, one name per line.
pub fn cmd_manifest(emit: bool) -> Result<(), CliError> {
    if !emit {
        return Err(CliError::input("MissingFlag: manifest requires --emit"));
    }
    let mut text = String::new();
    for name in feature_manifest_names() {
        text.push_str(&name);
        text.push('\n');
    }
    print!("{text}");
    Ok(())
}
