//! Deterministic report bundle: per-model error tables, gap statistics,
//! age-binned gap distributions, and the per-subject listing behind them.
//! All numbers are rounded to six decimals so re-running on identical
//! inputs reproduces the bundle byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::analytics::{
    gap_age_distribution, gap_stats, mae_difference_table, mae_of_records, AnalyticsError,
    CohortSplit, GapAgeBin, GapRecord, GapStats, MaeTable, SplitRole, ALL_HEALTHY_COLUMN,
    HEALTHY_TEST_COLUMN,
};
use crate::fsio::atomic_write;
use crate::ingest::Group;

/// Everything the report files are generated from, already aggregated.
/// Field order fixes the `report.json` key order.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    /// The run configuration, echoed verbatim.
    pub config: serde_json::Value,
    /// Per model and group label: positive/negative gap counts by age bin.
    pub gap_bins: BTreeMap<String, BTreeMap<String, Vec<GapAgeBin>>>,
    /// Per model and group label: gap summary statistics.
    pub gap_stats: BTreeMap<String, BTreeMap<String, GapStats>>,
    /// Per model: group MAE minus the healthy test MAE.
    pub mae_diff: MaeTable,
    /// Per model: MAE per group column.
    pub mae_table: MaeTable,
    /// Seeds the bundle depends on.
    pub seeds: BTreeMap<String, u64>,
    /// The healthy train/test split the tables are conditioned on.
    pub split: CohortSplit,
    /// Per model: every subject's gap record, with its split role.
    #[serde(skip)]
    pub gaps: BTreeMap<String, Vec<(GapRecord, SplitRole)>>,
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Group labels that get their own table column or row, in canonical
/// order: the healthy test split first, then the diseased groups.
fn table_labels() -> Vec<(String, Group, bool)> {
    let mut labels = vec![(HEALTHY_TEST_COLUMN.to_string(), Group::Healthy, true)];
    for g in Group::ALL {
        if g != Group::Healthy {
            labels.push((g.as_str().to_string(), g, false));
        }
    }
    labels
}

fn select<'a>(
    records: &'a [GapRecord],
    split: &CohortSplit,
    group: Group,
    test_only: bool,
) -> Vec<GapRecord> {
    records
        .iter()
        .filter(|r| r.group == group)
        .filter(|r| !test_only || split.role(&r.subject_id) == SplitRole::Test)
        .cloned()
        .collect()
}

/// Aggregate per-model gap records into the full report.
///
/// Healthy rows are computed on the test split only; the `healthy_all`
/// MAE column additionally covers every healthy subject, training ones
/// included, and is labeled accordingly. Errors if any model lacks
/// healthy test records.
pub fn build_report(
    records: &BTreeMap<String, Vec<GapRecord>>,
    split: &CohortSplit,
    config: serde_json::Value,
) -> Result<Report, AnalyticsError> {
    let mut mae_table: MaeTable = BTreeMap::new();
    let mut stats_all = BTreeMap::new();
    let mut bins_all = BTreeMap::new();
    let mut gaps = BTreeMap::new();

    for (model, recs) in records {
        let mut mae_row = BTreeMap::new();
        let mut stats_row = BTreeMap::new();
        let mut bins_row = BTreeMap::new();

        for (label, group, test_only) in table_labels() {
            let selected = select(recs, split, group, test_only);
            if selected.is_empty() {
                if test_only {
                    return Err(AnalyticsError::EmptyGroup);
                }
                continue;
            }
            mae_row.insert(label.clone(), round6(mae_of_records(&selected)));
            let s = gap_stats(&selected)?;
            stats_row.insert(
                label.clone(),
                GapStats {
                    n: s.n,
                    proportion_positive: round6(s.proportion_positive),
                    mean_gap: round6(s.mean_gap),
                    std_gap: round6(s.std_gap),
                },
            );
            bins_row.insert(label, gap_age_distribution(&selected));
        }
        let all_healthy = select(recs, split, Group::Healthy, false);
        mae_row.insert(
            ALL_HEALTHY_COLUMN.to_string(),
            round6(mae_of_records(&all_healthy)),
        );

        mae_table.insert(model.clone(), mae_row);
        stats_all.insert(model.clone(), stats_row);
        bins_all.insert(model.clone(), bins_row);

        let mut listed: Vec<(GapRecord, SplitRole)> = recs
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.age = round6(r.age);
                r.predicted_age = round6(r.predicted_age);
                r.gap = round6(r.gap);
                let role = split.role(&r.subject_id);
                (r, role)
            })
            .collect();
        listed.sort_by(|a, b| a.0.subject_id.cmp(&b.0.subject_id));
        gaps.insert(model.clone(), listed);
    }

    let mae_diff = mae_difference_table(&mae_table);
    let seeds = [("split".to_string(), split.seed)].into();
    Ok(Report {
        config,
        gap_bins: bins_all,
        gap_stats: stats_all,
        mae_diff,
        mae_table,
        seeds,
        split: split.clone(),
        gaps,
    })
}

fn csv_from_table(table: &MaeTable, columns: &[String]) -> String {
    let mut out = String::from("model");
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (model, row) in table {
        out.push_str(model);
        for c in columns {
            out.push(',');
            if let Some(v) = row.get(c) {
                out.push_str(&format!("{v:.6}"));
            }
        }
        out.push('\n');
    }
    out
}

fn ordered_columns(table: &MaeTable, with_healthy: bool) -> Vec<String> {
    let mut columns = Vec::new();
    if with_healthy {
        columns.push(HEALTHY_TEST_COLUMN.to_string());
        columns.push(ALL_HEALTHY_COLUMN.to_string());
    }
    for (label, _, test_only) in table_labels() {
        if !test_only && table.values().any(|row| row.contains_key(&label)) {
            columns.push(label);
        }
    }
    columns
}

/// Write the six-file bundle into `dir`: `report.json`, `mae_table.csv`,
/// `mae_diff.csv`, `gap_stats.csv`, `gap_bins.csv`, and `gaps.csv`.
pub fn write_report(dir: &Path, report: &Report) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut json = serde_json::to_vec_pretty(report).expect("report serializes");
    json.push(b'\n');
    atomic_write(&dir.join("report.json"), &json)?;

    let mae_cols = ordered_columns(&report.mae_table, true);
    atomic_write(
        &dir.join("mae_table.csv"),
        csv_from_table(&report.mae_table, &mae_cols).as_bytes(),
    )?;
    let diff_cols = ordered_columns(&report.mae_diff, false);
    atomic_write(
        &dir.join("mae_diff.csv"),
        csv_from_table(&report.mae_diff, &diff_cols).as_bytes(),
    )?;

    let mut stats = String::from("model,group,n,proportion_positive,mean_gap,std_gap\n");
    for (model, row) in &report.gap_stats {
        for (label, s) in ordered_rows(row) {
            stats.push_str(&format!(
                "{model},{label},{},{:.6},{:.6},{:.6}\n",
                s.n, s.proportion_positive, s.mean_gap, s.std_gap
            ));
        }
    }
    atomic_write(&dir.join("gap_stats.csv"), stats.as_bytes())?;

    let mut bins = String::from("model,group,age_lo,age_hi,positive,negative\n");
    for (model, row) in &report.gap_bins {
        for (label, table) in ordered_rows(row) {
            for b in table {
                bins.push_str(&format!(
                    "{model},{label},{},{},{},{}\n",
                    b.age_lo, b.age_hi, b.positive, b.negative
                ));
            }
        }
    }
    atomic_write(&dir.join("gap_bins.csv"), bins.as_bytes())?;

    let mut gaps = String::from("model,subject_id,group,role,age,predicted_age,gap\n");
    for (model, listed) in &report.gaps {
        for (r, role) in listed {
            gaps.push_str(&format!(
                "{model},{},{},{},{:.6},{:.6},{:.6}\n",
                r.subject_id,
                r.group,
                role.as_str(),
                r.age,
                r.predicted_age,
                r.gap
            ));
        }
    }
    atomic_write(&dir.join("gaps.csv"), gaps.as_bytes())
}

/// Rows of a per-group map in canonical label order.
fn ordered_rows<'a, T>(row: &'a BTreeMap<String, T>) -> Vec<(&'a String, &'a T)> {
    let mut out = Vec::new();
    for (label, _, _) in table_labels() {
        if let Some((k, v)) = row.get_key_value(&label) {
            out.push((k, v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, group: Group, age: f64, predicted: f64) -> GapRecord {
        GapRecord::new(id.into(), group, age, predicted)
    }

    fn fixture() -> (BTreeMap<String, Vec<GapRecord>>, CohortSplit) {
        let split = CohortSplit {
            train: vec!["h1".into(), "h2".into()],
            test: vec!["h3".into(), "h4".into()],
            age_min: 50.0,
            train_fraction: 0.75,
            seed: 9,
        };
        let recs = vec![
            record("h1", Group::Healthy, 60.0, 60.5),
            record("h2", Group::Healthy, 64.0, 63.0),
            record("h3", Group::Healthy, 70.0, 72.0),
            record("h4", Group::Healthy, 66.0, 65.0),
            record("d1", Group::Ad, 68.0, 74.0),
            record("d2", Group::Ad, 72.0, 77.0),
        ];
        let mut records = BTreeMap::new();
        records.insert("rf".to_string(), recs.clone());
        records.insert("gbt".to_string(), recs);
        (records, split)
    }

    #[test]
    fn healthy_columns_separate_test_from_all() {
        let (records, split) = fixture();
        let r = build_report(&records, &split, serde_json::json!({})).unwrap();
        let row = &r.mae_table["rf"];
        // Test split: |2.0| and |-1.0| -> 1.5. All healthy adds 0.5 and 1.0.
        assert_eq!(row[HEALTHY_TEST_COLUMN], 1.5);
        assert_eq!(row[ALL_HEALTHY_COLUMN], 1.125);
        assert_eq!(row["AD"], 5.5);
        assert_eq!(r.mae_diff["rf"]["AD"], 4.0);
        assert!(!r.mae_diff["rf"].contains_key(HEALTHY_TEST_COLUMN));

        let stats = &r.gap_stats["rf"];
        assert_eq!(stats[HEALTHY_TEST_COLUMN].n, 2, "train rows are excluded");
        assert_eq!(stats["AD"].n, 2);
        assert_eq!(stats["AD"].mean_gap, 5.5);
    }

    #[test]
    fn missing_healthy_test_records_error_out() {
        let (mut records, split) = fixture();
        for recs in records.values_mut() {
            recs.retain(|r| r.group != Group::Healthy || split.role(&r.subject_id) != SplitRole::Test);
        }
        assert!(matches!(
            build_report(&records, &split, serde_json::json!({})),
            Err(AnalyticsError::EmptyGroup)
        ));
    }

    #[test]
    fn bundle_files_have_the_declared_shapes() {
        let (records, split) = fixture();
        let config = serde_json::json!({"note": "unit fixture"});
        let r = build_report(&records, &split, config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_report(dir.path(), &r).unwrap();

        let mae = std::fs::read_to_string(dir.path().join("mae_table.csv")).unwrap();
        let mut lines = mae.lines();
        assert_eq!(lines.next().unwrap(), "model,healthy_test,healthy_all,AD");
        assert_eq!(lines.next().unwrap(), "gbt,1.500000,1.125000,5.500000");

        let diff = std::fs::read_to_string(dir.path().join("mae_diff.csv")).unwrap();
        assert!(diff.starts_with("model,AD\ngbt,4.000000\n"), "{diff}");

        let gaps = std::fs::read_to_string(dir.path().join("gaps.csv")).unwrap();
        assert!(gaps.contains("rf,h1,healthy,train,60.000000,60.500000,0.500000"));
        assert!(gaps.contains("rf,d1,AD,other,68.000000,74.000000,6.000000"));
        assert_eq!(gaps.lines().count(), 1 + 2 * 6);

        let stats = std::fs::read_to_string(dir.path().join("gap_stats.csv")).unwrap();
        assert!(stats.contains("rf,healthy_test,2,0.500000,0.500000,2.121320"));

        let bins = std::fs::read_to_string(dir.path().join("gap_bins.csv")).unwrap();
        assert!(bins.contains("rf,AD,65,70,1,0"));
        assert!(bins.contains("rf,AD,70,75,1,0"));

        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        assert_eq!(json["config"]["note"], "unit fixture");
        assert_eq!(json["seeds"]["split"], 9);
        assert_eq!(json["split"]["train"][0], "h1");
        assert_eq!(json["mae_table"]["rf"]["AD"], 5.5);
        assert!(json.get("gaps").is_none(), "per-subject rows live in the CSV");
    }

    #[test]
    fn identical_inputs_reproduce_identical_bundles() {
        let (records, split) = fixture();
        let config = serde_json::json!({"seed": 5});
        let a_dir = tempfile::tempdir().unwrap();
        let b_dir = tempfile::tempdir().unwrap();
        write_report(
            a_dir.path(),
            &build_report(&records, &split, config.clone()).unwrap(),
        )
        .unwrap();
        write_report(
            b_dir.path(),
            &build_report(&records, &split, config).unwrap(),
        )
        .unwrap();
        for name in [
            "report.json",
            "mae_table.csv",
            "mae_diff.csv",
            "gap_stats.csv",
            "gap_bins.csv",
            "gaps.csv",
        ] {
            let a = std::fs::read(a_dir.path().join(name)).unwrap();
            let b = std::fs::read(b_dir.path().join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
    }
}
