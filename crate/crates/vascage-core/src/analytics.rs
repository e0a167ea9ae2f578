//! Cohort splitting and predicted-age-gap analytics: stratified healthy
//! train/test splits, error tables per model and group, gap statistics,
//! and age-binned gap distributions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Group;
use crate::models::AGE_BIN_YEARS;

/// Default eligibility floor: only subjects strictly older may train.
pub const DEFAULT_AGE_MIN: f64 = 50.0;
/// Default fraction of eligible subjects assigned to training.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.75;
/// Fewest eligible subjects worth splitting at all.
pub const MIN_ELIGIBLE: usize = 8;

/// Column label for the healthy test-split rows of MAE tables.
pub const HEALTHY_TEST_COLUMN: &str = "healthy_test";
/// Column label for the all-healthy-subjects rows of MAE tables.
pub const ALL_HEALTHY_COLUMN: &str = "healthy_all";

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("TooFewEligible: {0} eligible subjects, need >= {MIN_ELIGIBLE}")]
    TooFewEligible(usize),
    #[error("EmptyGroup: no gap records to summarize")]
    EmptyGroup,
}

/// A deterministic train/test division of the eligible healthy subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub age_min: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

/// A subject's relation to a [`CohortSplit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Test,
    /// Not part of the split: a diseased subject or an under-age healthy one.
    Other,
}

impl SplitRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Test => "test",
            SplitRole::Other => "other",
        }
    }
}

impl CohortSplit {
    /// Role of a subject id within this split.
    pub fn role(&self, subject_id: &str) -> SplitRole {
        if self.train.iter().any(|s| s == subject_id) {
            SplitRole::Train
        } else if self.test.iter().any(|s| s == subject_id) {
            SplitRole::Test
        } else {
            SplitRole::Other
        }
    }
}

/// Split the healthy subjects older than `age_min` (strictly) into train
/// and test sets, stratified by 5-year age bin.
///
/// Subjects are ordered by id before binning, so the split depends only
/// on the eligible (id, age) set and the seed, never on input order.
/// Within each bin a seeded shuffle runs and the first
/// floor(train_fraction x bin size) subjects train; bins are visited in
/// ascending age order with one RNG stream, making the whole assignment
/// reproducible.
pub fn split_healthy(
    ids: &[String],
    ages: &[f64],
    groups: &[Group],
    age_min: f64,
    train_fraction: f64,
    seed: u64,
) -> Result<CohortSplit, AnalyticsError> {
    assert!(ids.len() == ages.len() && ids.len() == groups.len());
    assert!((0.0..=1.0).contains(&train_fraction));
    let mut eligible: Vec<(&String, f64)> = ids
        .iter()
        .zip(ages)
        .zip(groups)
        .filter(|&((_, &age), &g)| g == Group::Healthy && age > age_min)
        .map(|((id, &age), _)| (id, age))
        .collect();
    if eligible.len() < MIN_ELIGIBLE {
        return Err(AnalyticsError::TooFewEligible(eligible.len()));
    }
    eligible.sort_by(|a, b| a.0.cmp(b.0));

    let mut bins: BTreeMap<i64, Vec<&String>> = BTreeMap::new();
    for (id, age) in eligible {
        bins.entry((age / AGE_BIN_YEARS).floor() as i64)
            .or_default()
            .push(id);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in bins.values_mut() {
        members.shuffle(&mut rng);
        let n_train = (train_fraction * members.len() as f64).floor() as usize;
        for (k, id) in members.iter().enumerate() {
            if k < n_train {
                train.push((*id).clone());
            } else {
                test.push((*id).clone());
            }
        }
    }
    train.sort();
    test.sort();
    Ok(CohortSplit {
        train,
        test,
        age_min,
        train_fraction,
        seed,
    })
}

/// Mean absolute error between predictions and targets, in years.
pub fn mae(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "mae needs equal-length inputs");
    assert!(!pred.is_empty(), "mae needs at least one pair");
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64
}

/// One subject's predicted age next to the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub subject_id: String,
    pub group: Group,
    /// Chronological age, years.
    pub age: f64,
    /// Model-predicted age, years.
    pub predicted_age: f64,
    /// Predicted minus chronological age, years.
    pub gap: f64,
}

impl GapRecord {
    pub fn new(subject_id: String, group: Group, age: f64, predicted_age: f64) -> Self {
        GapRecord {
            subject_id,
            group,
            age,
            predicted_age,
            gap: predicted_age - age,
        }
    }
}

/// Mean absolute error of a record set; the absolute gap is exactly the
/// absolute prediction error.
pub fn mae_of_records(records: &[GapRecord]) -> f64 {
    assert!(!records.is_empty(), "mae needs at least one record");
    records.iter().map(|r| r.gap.abs()).sum::<f64>() / records.len() as f64
}

/// MAE per model (outer key) and per column label (inner key). Columns
/// are group names plus the two healthy variants.
pub type MaeTable = BTreeMap<String, BTreeMap<String, f64>>;

/// For each model, every group column's MAE minus that model's healthy
/// test-split MAE. The healthy columns themselves are dropped.
pub fn mae_difference_table(table: &MaeTable) -> MaeTable {
    table
        .iter()
        .map(|(model, row)| {
            let healthy = *row
                .get(HEALTHY_TEST_COLUMN)
                .expect("MAE rows carry the healthy test column");
            let diffs = row
                .iter()
                .filter(|(col, _)| {
                    col.as_str() != HEALTHY_TEST_COLUMN && col.as_str() != ALL_HEALTHY_COLUMN
                })
                .map(|(col, v)| (col.clone(), v - healthy))
                .collect();
            (model.clone(), diffs)
        })
        .collect()
}

/// Signed-gap summary of one group of records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub n: usize,
    /// Fraction of records with gap strictly above zero.
    pub proportion_positive: f64,
    /// Mean over all gaps, years.
    pub mean_gap: f64,
    /// Standard deviation over all gaps (n-1 denominator), years.
    pub std_gap: f64,
}

/// Summarize the gaps of one group: the positive share, and the mean and
/// spread of the signed gaps.
pub fn gap_stats(records: &[GapRecord]) -> Result<GapStats, AnalyticsError> {
    if records.is_empty() {
        return Err(AnalyticsError::EmptyGroup);
    }
    let n = records.len();
    let positive = records.iter().filter(|r| r.gap > 0.0).count();
    let mean = records.iter().map(|r| r.gap).sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        let ss = records
            .iter()
            .map(|r| (r.gap - mean) * (r.gap - mean))
            .sum::<f64>();
        (ss / (n - 1) as f64).sqrt()
    };
    Ok(GapStats {
        n,
        proportion_positive: positive as f64 / n as f64,
        mean_gap: mean,
        std_gap: std,
    })
}

/// Positive and non-positive gap counts inside one chronological age bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapAgeBin {
    /// Inclusive lower edge of the bin, years.
    pub age_lo: i64,
    /// Exclusive upper edge of the bin, years.
    pub age_hi: i64,
    pub positive: usize,
    pub negative: usize,
}

/// Bucket records by chronological age into 5-year bins and count gaps
/// above zero against the rest. Only occupied bins are returned, in
/// ascending age order.
pub fn gap_age_distribution(records: &[GapRecord]) -> Vec<GapAgeBin> {
    let mut bins: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for r in records {
        let b = (r.age / AGE_BIN_YEARS).floor() as i64;
        let e = bins.entry(b).or_default();
        if r.gap > 0.0 {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    bins.into_iter()
        .map(|(b, (positive, negative))| GapAgeBin {
            age_lo: b * AGE_BIN_YEARS as i64,
            age_hi: (b + 1) * AGE_BIN_YEARS as i64,
            positive,
            negative,
        })
        .collect()
}
