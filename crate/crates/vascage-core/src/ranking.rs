//! Feature ranking by between-group separation: z-score each column over
//! all subjects, average per clinical group, and score each feature by the
//! variance of its group means. High variance means the groups pull the
//! feature apart.

use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::ingest::Group;

/// Number of features reported by a ranking.
pub const TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum RankError {
    #[error("TooFewGroups: {0}, need ≥ 2")]
    TooFewGroups(usize),
    #[error("TooFewSubjects: {0}, need ≥ 2")]
    TooFewSubjects(usize),
}

/// Column statistics captured by standardization.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Sample standard deviation (n−1); 1.0 placeholder for constants.
    pub stds: Vec<f64>,
    /// Columns with no spread at all; their z-scores are forced to zero.
    pub constant: Vec<bool>,
}

/// Z-score every column with the sample standard deviation. A constant
/// column (max equals min) gets all-zero scores and a flag.
pub fn standardize_columns(rows: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Standardization), RankError> {
    let n = rows.len();
    if n < 2 {
        return Err(RankError::TooFewSubjects(n));
    }
    let p = rows[0].len();
    let mut means = vec![0.0; p];
    let mut stds = vec![1.0; p];
    let mut constant = vec![false; p];
    for j in 0..p {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for row in rows {
            lo = lo.min(row[j]);
            hi = hi.max(row[j]);
            sum += row[j];
        }
        means[j] = sum / n as f64;
        if lo == hi {
            constant[j] = true;
            continue;
        }
        let ss: f64 = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum();
        stds[j] = (ss / (n - 1) as f64).sqrt();
    }
    let z = rows
        .iter()
        .map(|row| {
            (0..p)
                .map(|j| {
                    if constant[j] {
                        0.0
                    } else {
                        (row[j] - means[j]) / stds[j]
                    }
                })
                .collect()
        })
        .collect();
    Ok((
        z,
        Standardization {
            means,
            stds,
            constant,
        },
    ))
}

/// Outcome of ranking a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub feature_names: Vec<String>,
    /// Group-mean variance per column; zero for ineligible columns.
    pub scores: Vec<f64>,
    /// False for constant columns, which never rank.
    pub eligible: Vec<bool>,
    /// Groups present, in canonical group order.
    pub groups: Vec<Group>,
    /// Per-group mean z-score, indexed `[group][feature]`.
    pub group_means: Vec<Vec<f64>>,
    /// Column indices of the best features, descending score, ties broken
    /// by ascending column index.
    pub top: Vec<usize>,
}

/// Rank all columns of the matrix, keeping the default [`TOP_K`] best.
pub fn rank_features(m: &FeatureMatrix) -> Result<RankingResult, RankError> {
    rank_features_k(m, TOP_K)
}

/// Rank all columns of the matrix, keeping the `k` best; needs at least
/// two groups present.
pub fn rank_features_k(m: &FeatureMatrix, k: usize) -> Result<RankingResult, RankError> {
    let (z, st) = standardize_columns(&m.rows)?;
    let groups: Vec<Group> = Group::ALL
        .into_iter()
        .filter(|g| m.groups.contains(g))
        .collect();
    if groups.len() < 2 {
        return Err(RankError::TooFewGroups(groups.len()));
    }
    let p = m.n_features();
    let mut group_means = Vec::with_capacity(groups.len());
    for &g in &groups {
        let members: Vec<usize> = (0..m.n_subjects()).filter(|&i| m.groups[i] == g).collect();
        let mut mean = vec![0.0; p];
        for &i in &members {
            for j in 0..p {
                mean[j] += z[i][j];
            }
        }
        for v in mean.iter_mut() {
            *v /= members.len() as f64;
        }
        group_means.push(mean);
    }

    let gn = groups.len() as f64;
    let scores: Vec<f64> = (0..p)
        .map(|j| {
            if st.constant[j] {
                return 0.0;
            }
            let grand = group_means.iter().map(|gm| gm[j]).sum::<f64>() / gn;
            group_means
                .iter()
                .map(|gm| (gm[j] - grand).powi(2))
                .sum::<f64>()
                / (gn - 1.0)
        })
        .collect();
    let eligible: Vec<bool> = st.constant.iter().map(|&c| !c).collect();

    let mut top: Vec<usize> = (0..p).filter(|&j| eligible[j]).collect();
    top.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    top.truncate(k);

    Ok(RankingResult {
        feature_names: m.names.clone(),
        scores,
        eligible,
        groups,
        group_means,
        top,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matrix(names: &[&str], groups: Vec<Group>, rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let n = rows.len();
        FeatureMatrix {
            names: names.iter().map(|s| s.to_string()).collect(),
            subject_ids: (0..n).map(|i| format!("s{i:04}")).collect(),
            ages: vec![60.0; n],
            groups,
            rows,
        }
    }

    #[test]
    fn hand_computed_two_group_example() {
        // Feature a separates the groups, feature b does not.
        let m = matrix(
            &["a", "b"],
            vec![Group::Healthy, Group::Healthy, Group::Ad, Group::Ad],
            vec![
                vec![1.0, 5.0],
                vec![2.0, 6.0],
                vec![9.0, 5.0],
                vec![10.0, 6.0],
            ],
        );
        let r = rank_features(&m).unwrap();
        // Column a: mean 5.5, sd sqrt((4.5^2·2+3.5^2·2)/3)=sqrt(65/3).
        let sd = (65.0f64 / 3.0).sqrt();
        let mean_h = ((1.0 - 5.5) / sd + (2.0 - 5.5) / sd) / 2.0;
        let mean_d = ((9.0 - 5.5) / sd + (10.0 - 5.5) / sd) / 2.0;
        let grand = (mean_h + mean_d) / 2.0;
        let want = (mean_h - grand).powi(2) + (mean_d - grand).powi(2); // /(2-1)
        assert!((r.scores[0] - want).abs() < 1e-12);
        assert!(r.scores[0] > r.scores[1]);
        assert_eq!(r.top[0], 0);
        assert_eq!(r.groups, vec![Group::Healthy, Group::Ad]);
    }

    #[test]
    fn constant_column_is_flagged_and_never_ranks() {
        let m = matrix(
            &["const", "x"],
            vec![Group::Healthy, Group::Ad],
            vec![vec![7.0, 1.0], vec![7.0, 2.0]],
        );
        let r = rank_features(&m).unwrap();
        assert!(!r.eligible[0]);
        assert_eq!(r.scores[0], 0.0);
        assert_eq!(r.top, vec![1]);
        for gm in &r.group_means {
            assert_eq!(gm[0], 0.0);
        }
    }

    #[test]
    fn ties_break_by_ascending_column_index() {
        // Identical columns get identical scores.
        let rows = vec![
            vec![1.0, 1.0, 3.0],
            vec![2.0, 2.0, 3.5],
            vec![8.0, 8.0, 4.0],
            vec![9.0, 9.0, 4.5],
        ];
        let m = matrix(
            &["dup1", "dup2", "weak"],
            vec![Group::Healthy, Group::Healthy, Group::Mci, Group::Mci],
            rows,
        );
        let r = rank_features(&m).unwrap();
        assert_eq!(r.scores[0], r.scores[1]);
        assert_eq!(r.top, vec![0, 1, 2]);
    }

    #[test]
    fn needs_two_groups_and_two_subjects() {
        let m = matrix(
            &["a"],
            vec![Group::Healthy, Group::Healthy],
            vec![vec![1.0], vec![2.0]],
        );
        assert!(matches!(
            rank_features(&m).unwrap_err(),
            RankError::TooFewGroups(1)
        ));
        let m = matrix(&["a"], vec![Group::Healthy], vec![vec![1.0]]);
        assert!(matches!(
            rank_features(&m).unwrap_err(),
            RankError::TooFewSubjects(1)
        ));
    }

    #[test]
    fn group_order_is_canonical_not_first_seen() {
        let m = matrix(
            &["a"],
            vec![Group::Established, Group::Healthy, Group::Mci],
            vec![vec![1.0], vec![2.0], vec![3.0]],
        );
        let r = rank_features(&m).unwrap();
        assert_eq!(
            r.groups,
            vec![Group::Healthy, Group::Mci, Group::Established]
        );
    }

    #[test]
    fn matches_naive_recomputation_on_random_matrices() {
        // Oracle: a from-scratch two-pass implementation.
        fn naive_scores(m: &FeatureMatrix) -> Vec<f64> {
            let n = m.n_subjects();
            let p = m.n_features();
            let mut scores = vec![0.0; p];
            for j in 0..p {
                let col: Vec<f64> = (0..n).map(|i| m.rows[i][j]).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if lo == hi {
                    continue;
                }
                let mean = col.iter().sum::<f64>() / n as f64;
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (n as f64 - 1.0))
                    .sqrt();
                let z: Vec<f64> = col.iter().map(|v| (v - mean) / sd).collect();
                let mut means = Vec::new();
                for g in Group::ALL {
                    let idx: Vec<usize> = (0..n).filter(|&i| m.groups[i] == g).collect();
                    if idx.is_empty() {
                        continue;
                    }
                    means.push(idx.iter().map(|&i| z[i]).sum::<f64>() / idx.len() as f64);
                }
                let grand = means.iter().sum::<f64>() / means.len() as f64;
                scores[j] = means.iter().map(|v| (v - grand).powi(2)).sum::<f64>()
                    / (means.len() as f64 - 1.0);
            }
            scores
        }

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let n = rng.random_range(6..40);
            let p = rng.random_range(2..20);
            let names: Vec<String> = (0..p).map(|j| format!("f{j}")).collect();
            let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let groups: Vec<Group> = (0..n)
                .map(|_| Group::ALL[rng.random_range(0..Group::ALL.len())])
                .collect();
            // Force at least two groups.
            let mut groups = groups;
            groups[0] = Group::Healthy;
            groups[1] = Group::Ad;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..p).map(|_| rng.random_range(-4.0..9.0)).collect())
                .collect();
            let m = matrix(&name_refs, groups, rows);
            let r = rank_features(&m).unwrap();
            let want = naive_scores(&m);
            for j in 0..p {
                assert!(
                    (r.scores[j] - want[j]).abs() < 1e-10,
                    "col {j}: {} vs {}",
                    r.scores[j],
                    want[j]
                );
            }
            // Top list is sorted by descending score with index tie-break.
            for w in r.top.windows(2) {
                let (a, b) = (w[0], w[1]);
                assert!(r.scores[a] > r.scores[b] || (r.scores[a] == r.scores[b] && a < b));
            }
        }
    }

    #[test]
    fn scores_are_invariant_to_affine_column_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 24;
        let groups: Vec<Group> = (0..n)
            .map(|i| {
                if i % 3 == 0 {
                    Group::Healthy
                } else if i % 3 == 1 {
                    Group::AcuteStroke
                } else {
                    Group::Mci
                }
            })
            .collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.random_range(0.0..10.0)).collect())
            .collect();
        let m = matrix(&["a", "b", "c", "d"], groups.clone(), rows.clone());
        let base = rank_features(&m).unwrap();
        for (scale, shift) in [(3.0, -2.0), (-1.5, 40.0), (0.01, 0.0)] {
            let transformed: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().map(|v| scale * v + shift).collect())
                .collect();
            let m2 = matrix(&["a", "b", "c", "d"], groups.clone(), transformed);
            let r2 = rank_features(&m2).unwrap();
            for j in 0..4 {
                assert!(
                    (base.scores[j] - r2.scores[j]).abs() < 1e-9,
                    "scale={scale} col {j}"
                );
            }
            assert_eq!(base.top, r2.top);
        }
    }
}
