//! Cohort planning and batch generation: draw per-subject parameters from a
//! master seed, then synthesize recordings in parallel with per-subject
//! seeds so the result is independent of scheduling.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fsio;
use crate::ingest::{save_recording, write_cohort_manifest, Group};
use crate::synth::recording::{
    synth_recording, RecordingTruth, Result, SubjectSpec, SynthError, LEAD_IN_S,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub group: Group,
    pub n: usize,
    /// Chronological age range, years, sampled uniformly.
    pub age_range: [f64; 2],
    /// Vascular age acceleration added to every subject, years.
    pub acceleration: f64,
}

/// Full description of a synthetic study cohort.
///
/// Heart rate and RR jitter decline linearly with effective age (within the
/// configured spread and clamps), so HRV features carry age signal just as
/// the morphological ones do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortConfig {
    pub master_seed: u64,
    pub groups: Vec<GroupSpec>,
    /// CBFV noise standard deviation, cm/s.
    pub noise_level: f64,
    /// Complete beats guaranteed per subject (recording duration is derived
    /// from this and the subject's heart rate, with margin for jitter).
    pub beats_per_subject: usize,
    pub hr_at_20: f64,
    pub hr_slope_per_year: f64,
    pub hr_spread: f64,
    pub hr_range: [f64; 2],
    pub jitter_at_20: f64,
    pub jitter_slope_per_year: f64,
    pub jitter_spread: f64,
    pub jitter_range: [f64; 2],
    pub bmi_range: [f64; 2],
}

impl Default for CohortConfig {
    fn default() -> Self {
        let diseased = |group, acceleration| GroupSpec {
            group,
            n: 40,
            age_range: [55.0, 78.0],
            acceleration,
        };
        CohortConfig {
            master_seed: 0,
            groups: vec![
                GroupSpec {
                    group: Group::Healthy,
                    n: 200,
                    age_range: [50.0, 85.0],
                    acceleration: 0.0,
                },
                diseased(Group::AcuteStroke, 6.1),
                diseased(Group::PostStroke, 5.5),
                diseased(Group::Ad, 3.6),
                diseased(Group::Mci, 1.7),
                diseased(Group::Established, 2.8),
            ],
            noise_level: 1.0,
            beats_per_subject: 364,
            hr_at_20: 85.0,
            hr_slope_per_year: 0.25,
            hr_spread: 4.0,
            hr_range: [50.0, 110.0],
            jitter_at_20: 0.045,
            jitter_slope_per_year: 0.00035,
            jitter_spread: 0.004,
            jitter_range: [0.005, 0.08],
            bmi_range: [20.0, 32.0],
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        let check_range = |name: &str, r: [f64; 2]| {
            if r[0] <= r[1] && r[0].is_finite() && r[1].is_finite() {
                Ok(())
            } else {
                Err(SynthError::InvalidConfig(format!("bad {name} range {r:?}")))
            }
        };
        for g in &self.groups {
            check_range(&format!("{} age", g.group), g.age_range)?;
        }
        check_range("hr", self.hr_range)?;
        check_range("jitter", self.jitter_range)?;
        check_range("bmi", self.bmi_range)?;
        if self.noise_level < 0.0 {
            return Err(SynthError::InvalidConfig("negative noise level".into()));
        }
        if self.beats_per_subject < 361 {
            return Err(SynthError::InvalidConfig(
                "beats_per_subject must be ≥ 361 so segmentation can form one entry".into(),
            ));
        }
        let total: usize = self.groups.iter().map(|g| g.n).sum();
        if total == 0 {
            return Err(SynthError::InvalidConfig("empty cohort".into()));
        }
        if total > 9999 {
            return Err(SynthError::InvalidConfig(
                "more than 9999 subjects breaks the id scheme".into(),
            ));
        }
        Ok(())
    }

    /// Recording duration for a subject: lead-in plus the requested beats
    /// with two beats of margin against jitter drift.
    pub fn duration_for(&self, spec: &SubjectSpec) -> f64 {
        LEAD_IN_S + (self.beats_per_subject + 2) as f64 * 60.0 / spec.heart_rate
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Resolve a config into concrete subject specs. Sequential and entirely
/// driven by the master seed; subject ids number generation order.
pub fn plan_cohort(config: &CohortConfig) -> Result<Vec<SubjectSpec>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
    let mut specs = Vec::new();
    let mut index = 0u64;
    for g in &config.groups {
        for _ in 0..g.n {
            let age = uniform(&mut rng, g.age_range);
            let e = age + g.acceleration;
            if !(20.0..=100.0).contains(&e) {
                return Err(SynthError::InvalidConfig(format!(
                    "effective age {e:.1} outside [20, 100] in group {}",
                    g.group
                )));
            }
            let hr_base = self_link(config.hr_at_20, config.hr_slope_per_year, e);
            let hr = (hr_base + uniform(&mut rng, [-config.hr_spread, config.hr_spread]))
                .clamp(config.hr_range[0], config.hr_range[1]);
            let jitter_base = self_link(config.jitter_at_20, config.jitter_slope_per_year, e);
            let jitter = (jitter_base
                + uniform(&mut rng, [-config.jitter_spread, config.jitter_spread]))
            .clamp(config.jitter_range[0], config.jitter_range[1]);
            let bmi = uniform(&mut rng, config.bmi_range);
            specs.push(SubjectSpec {
                subject_id: format!("s{:04}", index + 1),
                group: g.group,
                age,
                acceleration: g.acceleration,
                heart_rate: hr,
                rr_jitter: jitter,
                noise_level: config.noise_level,
                bmi,
                seed: config.master_seed ^ index,
            });
            index += 1;
        }
    }
    Ok(specs)
}

fn self_link(at_20: f64, slope_per_year: f64, e: f64) -> f64 {
    at_20 - slope_per_year * (e - 20.0)
}

/// Ground-truth index written next to a generated cohort.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortTruth {
    pub master_seed: u64,
    pub subjects: BTreeMap<String, RecordingTruth>,
}

/// Generate a full cohort on disk: per-subject recording CSV + sidecar, a
/// `manifest.csv`, the resolved `cohort_config.json`, and
/// `ground_truth.json`.
pub fn synth_cohort(config: &CohortConfig, out_dir: &Path) -> Result<CohortTruth> {
    let specs = plan_cohort(config)?;
    let fs = crate::ingest::ANALYSIS_RATE_HZ;
    let truths: Vec<RecordingTruth> = specs
        .par_iter()
        .map(|spec| -> Result<RecordingTruth> {
            let (rec, truth) = synth_recording(spec, config.duration_for(spec), fs)?;
            save_recording(&rec, &out_dir.join(format!("{}.csv", spec.subject_id)))?;
            Ok(truth)
        })
        .collect::<Result<Vec<_>>>()?;

    let entries: Vec<(String, String)> = specs
        .iter()
        .map(|s| (s.subject_id.clone(), format!("{}.csv", s.subject_id)))
        .collect();
    write_cohort_manifest(&entries, &out_dir.join("manifest.csv"))?;

    let mut config_json = serde_json::to_string_pretty(config)?;
    config_json.push('\n');
    fsio::atomic_write(&out_dir.join("cohort_config.json"), config_json.as_bytes())?;

    let truth = CohortTruth {
        master_seed: config.master_seed,
        subjects: truths
            .into_iter()
            .map(|t| (t.spec.subject_id.clone(), t))
            .collect(),
    };
    let mut truth_json = serde_json::to_string_pretty(&truth)?;
    truth_json.push('\n');
    fsio::atomic_write(&out_dir.join("ground_truth.json"), truth_json.as_bytes())?;
    Ok(truth)
}
