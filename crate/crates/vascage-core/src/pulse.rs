//! Dominant-pulse extraction: time-normalize the beats of an entry onto a
//! fixed 400-sample grid, cluster them under correlation distance, and
//! average the largest cluster into one representative waveform.

use thiserror::Error;

use crate::ingest::{EntrySegment, ANALYSIS_RATE_HZ};

/// Fixed length of a time-normalized beat.
pub const PULSE_GRID: usize = 400;
/// Dendrogram cut: beats closer than this correlation distance are one
/// morphology.
pub const CLUSTER_CUT: f64 = 0.05;
/// The dominant cluster must hold at least this fraction of the beats.
pub const DOMINANCE_FLOOR: f64 = 0.3;
/// Fewest beats worth clustering.
pub const MIN_BEATS: usize = 30;

pub type Result<T> = std::result::Result<T, PulseError>;

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("TooFewBeats: {0}, need ≥ {MIN_BEATS}")]
    TooFewBeats(usize),
    #[error("NoDominantCluster: largest cluster {largest} of {total} beats")]
    NoDominantCluster { largest: usize, total: usize },
    #[error("EmptyGroup")]
    EmptyGroup,
}

/// One beat on the normalized grid, amplitude untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatWaveform {
    pub samples: Vec<f64>,
    /// Onset-to-onset duration of the source beat, seconds.
    pub original_duration: f64,
}

/// Representative pulse of an entry: pointwise mean of the largest beat
/// cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct DominantPulse {
    pub samples: Vec<f64>,
    pub member_count: usize,
    pub total_beats: usize,
    /// Mean onset-to-onset duration of the member beats, seconds; grid index
    /// g corresponds to time g·duration/400 on the true beat clock.
    pub mean_beat_duration: f64,
}

/// Slice an entry at its onsets and map each beat onto the 400-sample grid
/// by linear interpolation. A 1-second beat at 400 Hz passes through
/// unchanged.
pub fn extract_beats(entry: &EntrySegment) -> Vec<BeatWaveform> {
    entry
        .beat_onsets
        .windows(2)
        .map(|w| {
            let beat = &entry.samples[w[0]..w[1]];
            let len = beat.len();
            let samples = (0..PULSE_GRID)
                .map(|g| {
                    let p = g as f64 * len as f64 / PULSE_GRID as f64;
                    let j = (p.floor() as usize).min(len - 1);
                    let j2 = (j + 1).min(len - 1);
                    let frac = p - j as f64;
                    beat[j] + (beat[j2] - beat[j]) * frac
                })
                .collect();
            BeatWaveform {
                samples,
                original_duration: len as f64 / ANALYSIS_RATE_HZ,
            }
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        if va == vb {
            1.0
        } else {
            0.0
        }
    } else {
        cov / (va.sqrt() * vb.sqrt())
    }
}

/// Agglomerative average-linkage clustering cut at `cutoff`, nearest-
/// neighbor-chain construction. Merge heights are replayed in ascending
/// order, which reproduces the dendrogram cut exactly because average
/// linkage is monotone.
pub(crate) fn cut_average_linkage(dist: &[Vec<f64>], cutoff: f64) -> Vec<Vec<usize>> {
    let n = dist.len();
    if n == 1 {
        return vec![vec![0]];
    }
    let mut d: Vec<Vec<f64>> = dist.to_vec();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges: Vec<(f64, usize, usize)> = Vec::with_capacity(n - 1);
    let mut chain: Vec<usize> = Vec::new();

    while merges.len() < n - 1 {
        if chain.is_empty() {
            let first = (0..n).find(|&i| active[i]).unwrap();
            chain.push(first);
        }
        loop {
            let c = *chain.last().unwrap();
            let mut nearest = usize::MAX;
            let mut best = f64::INFINITY;
            for k in 0..n {
                if k != c && active[k] && d[c][k] < best {
                    best = d[c][k];
                    nearest = k;
                }
            }
            if chain.len() >= 2 && nearest == chain[chain.len() - 2] {
                let a = chain.pop().unwrap();
                let b = chain.pop().unwrap();
                let (keep, drop) = if a < b { (a, b) } else { (b, a) };
                merges.push((d[keep][drop], keep, drop));
                let (sk, sd) = (size[keep] as f64, size[drop] as f64);
                for k in 0..n {
                    if active[k] && k != keep && k != drop {
                        let nd = (sk * d[keep][k] + sd * d[drop][k]) / (sk + sd);
                        d[keep][k] = nd;
                        d[k][keep] = nd;
                    }
                }
                size[keep] += size[drop];
                active[drop] = false;
                break;
            }
            chain.push(nearest);
        }
    }

    // Union-find replay of the merges below the cut, in height order.
    let mut order: Vec<usize> = (0..merges.len()).collect();
    order.sort_by(|&i, &j| {
        merges[i]
            .0
            .total_cmp(&merges[j].0)
            .then(i.cmp(&j))
    });
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &m in &order {
        let (h, a, b) = merges[m];
        if h > cutoff {
            break;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        clusters.entry(r).or_default().push(i);
    }
    clusters.into_values().collect()
}

/// Sum values in ascending order so the result does not depend on input
/// permutation, bit for bit.
fn ordered_mean(values: &mut Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn mean_waveform(beats: &[BeatWaveform], members: &[usize]) -> Vec<f64> {
    (0..PULSE_GRID)
        .map(|g| {
            let mut vals: Vec<f64> = members.iter().map(|&i| beats[i].samples[g]).collect();
            ordered_mean(&mut vals)
        })
        .collect()
}

/// Cluster the beats and average the largest cluster.
///
/// Size ties go to the cluster whose mean correlates best with the grand
/// mean of all beats, then to the cluster containing the lowest beat index.
/// Output is invariant to beat order: cluster contents are order-free sets
/// and all means sum their inputs in value order.
pub fn dominant_pulse(beats: &[BeatWaveform]) -> Result<DominantPulse> {
    let n = beats.len();
    if n < MIN_BEATS {
        return Err(PulseError::TooFewBeats(n));
    }
    // Center and unit-scale each beat once so every pairwise correlation
    // is a single dot product; flat beats keep the same convention as
    // `pearson` (correlated with each other, uncorrelated with the rest).
    let prepared: Vec<Option<Vec<f64>>> = beats
        .iter()
        .map(|b| {
            let m = b.samples.iter().sum::<f64>() / b.samples.len() as f64;
            let centered: Vec<f64> = b.samples.iter().map(|&v| v - m).collect();
            let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm > 0.0).then(|| centered.iter().map(|v| v / norm).collect())
        })
        .collect();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let r = match (&prepared[i], &prepared[j]) {
                (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
                (None, None) => 1.0,
                _ => 0.0,
            };
            let d = 1.0 - r;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let clusters = cut_average_linkage(&dist, CLUSTER_CUT);

    let largest = clusters.iter().map(Vec::len).max().unwrap();
    let floor = (DOMINANCE_FLOOR * n as f64).ceil() as usize;
    if largest < floor {
        return Err(PulseError::NoDominantCluster { largest, total: n });
    }
    let grand = mean_waveform(beats, &(0..n).collect::<Vec<_>>());
    let winner = clusters
        .iter()
        .filter(|c| c.len() == largest)
        .min_by(|a, b| {
            let ca = pearson(&mean_waveform(beats, a), &grand);
            let cb = pearson(&mean_waveform(beats, b), &grand);
            cb.total_cmp(&ca).then(a[0].cmp(&b[0]))
        })
        .unwrap();

    let samples = mean_waveform(beats, winner);
    let mut durations: Vec<f64> = winner.iter().map(|&i| beats[i].original_duration).collect();
    let mean_beat_duration = ordered_mean(&mut durations);
    Ok(DominantPulse {
        samples,
        member_count: winner.len(),
        total_beats: n,
        mean_beat_duration,
    })
}

/// Unweighted pointwise mean of already-extracted dominant pulses, for
/// group-level waveform comparison.
pub fn average_dominant_pulse(pulses: &[DominantPulse]) -> Result<Vec<f64>> {
    if pulses.is_empty() {
        return Err(PulseError::EmptyGroup);
    }
    Ok((0..PULSE_GRID)
        .map(|g| pulses.iter().map(|p| p.samples[g]).sum::<f64>() / pulses.len() as f64)
        .collect())
}
