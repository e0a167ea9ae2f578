//! Run configuration: a JSON file with strict keys, merged with command
//! line flags. Every stochastic command takes its seed from here or from
//! `--seed`; there is no clock fallback.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::commands::CliError;

/// Seeds for the stochastic stages. A stage whose seed is absent falls
/// back to `--seed`; if that is absent too, the command fails.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Cohort generation.
    pub master: Option<u64>,
    /// Healthy train/test split.
    pub split: Option<u64>,
    /// Model training.
    pub model: Option<u64>,
}

/// The full run configuration. Unknown keys are rejected so a typo never
/// silently becomes a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seeds: Seeds,
    /// Model kinds to train and report: any of `rf`, `gbt`, `krr`.
    pub models: Vec<String>,
    /// Healthy subjects must be strictly older than this to enter the
    /// train/test split.
    pub age_min: f64,
    /// Fraction of eligible healthy subjects assigned to training.
    pub train_fraction: f64,
    /// Features kept by `rank`.
    pub top_k: usize,
    /// Write per-side beat onset indices during `extract`.
    pub dump_beats: bool,
    /// Write per-side dominant pulses during `extract`.
    pub dump_pulses: bool,
    /// Cohort generator overrides for `synth`; keys follow the generator
    /// config, except that the seed must come from `seeds.master` or
    /// `--seed`.
    pub synth: serde_json::Value,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seeds: Seeds::default(),
            models: vec!["rf".into(), "gbt".into(), "krr".into()],
            age_min: vascage_core::analytics::DEFAULT_AGE_MIN,
            train_fraction: vascage_core::analytics::DEFAULT_TRAIN_FRACTION,
            top_k: vascage_core::ranking::TOP_K,
            dump_beats: false,
            dump_pulses: false,
            synth: serde_json::Value::Object(Default::default()),
        }
    }
}

/// A parsed config plus the exact JSON that produced it, for the verbatim
/// echo into `report.json`.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub run: RunConfig,
    pub raw: serde_json::Value,
}

/// Load a config file, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
    let Some(path) = path else {
        let run = RunConfig::default();
        let raw = serde_json::to_value(&run).expect("default config serializes");
        return Ok(LoadedConfig { run, raw });
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("ConfigUnreadable: {}: {e}", path.display())))?;
    let raw: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("ConfigInvalid: {e}")))?;
    let run: RunConfig = serde_json::from_value(raw.clone())
        .map_err(|e| CliError::input(format!("ConfigInvalid: {e}")))?;
    if run.synth.get("master_seed").is_some() {
        return Err(CliError::input(
            "ConfigInvalid: set the generator seed via seeds.master or --seed, not synth.master_seed",
        ));
    }
    for m in &run.models {
        m.parse::<vascage_core::models::ModelKind>()
            .map_err(|e| CliError::input(format!("ConfigInvalid: models: {e}")))?;
    }
    if run.models.is_empty() {
        return Err(CliError::input("ConfigInvalid: models list is empty"));
    }
    if !(run.train_fraction > 0.0 && run.train_fraction < 1.0) {
        return Err(CliError::input(format!(
            "ConfigInvalid: train_fraction {} outside (0, 1)",
            run.train_fraction
        )));
    }
    Ok(LoadedConfig { run, raw })
}

/// The output directory: `--out` beats everything, and there is no
/// default.
pub fn resolve_out(flag: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    flag.cloned()
        .ok_or_else(|| CliError::input("MissingOut: this command needs --out <dir>"))
}

/// A stage seed: the config value if pinned, else `--seed`, else an
/// error naming the stage.
pub fn resolve_seed(
    configured: Option<u64>,
    flag: Option<u64>,
    stage: &str,
) -> Result<u64, CliError> {
    configured.or(flag).ok_or_else(|| {
        CliError::input(format!(
            "MissingSeed: {stage} needs --seed or seeds.{stage} in the config"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_apply_without_a_file() {
        let c = load_config(None).unwrap();
        assert_eq!(c.run.models, ["rf", "gbt", "krr"]);
        assert_eq!(c.run.top_k, 10);
        assert_eq!(c.run.age_min, 50.0);
        assert_eq!(c.run.train_fraction, 0.75);
        assert_eq!(c.raw["top_k"], 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"top_kk": 5}"#).unwrap();
        let err = load_config(Some(&p)).unwrap_err();
        assert!(err.to_string().contains("ConfigInvalid"), "{err}");
    }

    #[test]
    fn synth_seed_must_come_from_the_seed_channel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"synth": {"master_seed": 3}}"#).unwrap();
        let err = load_config(Some(&p)).unwrap_err();
        assert!(err.to_string().contains("seeds.master"), "{err}");
    }

    #[test]
    fn seed_resolution_prefers_the_config() {
        assert_eq!(resolve_seed(Some(5), Some(9), "split").unwrap(), 5);
        assert_eq!(resolve_seed(None, Some(9), "split").unwrap(), 9);
        let err = resolve_seed(None, None, "split").unwrap_err();
        assert!(err.to_string().starts_with("MissingSeed"));
    }
}
