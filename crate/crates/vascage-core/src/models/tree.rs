//! Weighted least-squares regression tree. Splits minimize the summed
//! weighted squared error of the two children, computed with prefix sums
//! over samples sorted by feature value. The search is deterministic: a
//! split only replaces the incumbent when strictly better, so ties go to
//! the lowest feature index and the earliest split position.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tree growth limits and the per-node feature subsample.
#[derive(Debug, Clone, Copy)]
pub struct TreeConfig {
    pub max_depth: usize,
    /// Candidate features per node; `None` considers all of them.
    pub mtry: Option<usize>,
}

/// A fitted tree in flat preorder arrays. `feature[i] < 0` marks a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = 0usize;
        loop {
            let f = self.feature[node];
            if f < 0 {
                return self.value[node];
            }
            node = if row[f as usize] <= self.threshold[node] {
                self.left[node] as usize
            } else {
                self.right[node] as usize
            };
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }
}

struct Builder<'a, R: Rng> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    w: &'a [f64],
    n_features: usize,
    cfg: TreeConfig,
    rng: &'a mut R,
    tree: Tree,
}

/// Best split of one node: strictly-better-only updates fix the tie rule.
struct BestSplit {
    sse: f64,
    threshold: f64,
    left: Vec<usize>,
    right: Vec<usize>,
    feature: usize,
}

impl<R: Rng> Builder<'_, R> {
    fn push_leaf(&mut self, value: f64) -> u32 {
        let id = self.tree.feature.len() as u32;
        self.tree.feature.push(-1);
        self.tree.threshold.push(0.0);
        self.tree.left.push(0);
        self.tree.right.push(0);
        self.tree.value.push(value);
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match self.cfg.mtry {
            None => (0..self.n_features).collect(),
            Some(m) => {
                let m = m.min(self.n_features);
                let mut picked: Vec<usize> =
                    rand::seq::index::sample(self.rng, self.n_features, m).into_iter().collect();
                picked.sort_unstable();
                picked
            }
        }
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<BestSplit> {
        let mut best: Option<BestSplit> = None;
        for f in self.candidate_features() {
            let mut order = idx.to_vec();
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let n = order.len();
            let (mut sw, mut swy, mut swy2) = (0.0, 0.0, 0.0);
            let mut prefix = Vec::with_capacity(n);
            for &i in &order {
                sw += self.w[i];
                swy += self.w[i] * self.y[i];
                swy2 += self.w[i] * self.y[i] * self.y[i];
                prefix.push((sw, swy, swy2));
            }
            let (tw, twy, twy2) = prefix[n - 1];
            for k in 1..n {
                let (a, b) = (self.x[order[k - 1]][f], self.x[order[k]][f]);
                if b <= a {
                    continue;
                }
                let (lw, lwy, lwy2) = prefix[k - 1];
                let (rw, rwy, rwy2) = (tw - lw, twy - lwy, twy2 - lwy2);
                let sse = (lwy2 - lwy * lwy / lw) + (rwy2 - rwy * rwy / rw);
                if best.as_ref().is_none_or(|bst| sse < bst.sse) {
                    best = Some(BestSplit {
                        sse,
                        threshold: (a + b) / 2.0,
                        left: order[..k].to_vec(),
                        right: order[k..].to_vec(),
                        feature: f,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> u32 {
        let (mut sw, mut swy) = (0.0, 0.0);
        let (mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in idx {
            sw += self.w[i];
            swy += self.w[i] * self.y[i];
            ylo = ylo.min(self.y[i]);
            yhi = yhi.max(self.y[i]);
        }
        let mean = swy / sw;
        if depth >= self.cfg.max_depth || idx.len() < 2 || ylo == yhi {
            return self.push_leaf(mean);
        }
        let Some(split) = self.best_split(idx) else {
            return self.push_leaf(mean);
        };

        let id = self.tree.feature.len() as u32;
        self.tree.feature.push(split.feature as i32);
        self.tree.threshold.push(split.threshold);
        self.tree.left.push(0);
        self.tree.right.push(0);
        self.tree.value.push(mean);
        let left = self.build(&split.left, depth + 1);
        let right = self.build(&split.right, depth + 1);
        self.tree.left[id as usize] = left;
        self.tree.right[id as usize] = right;
        id
    }
}

/// Fit a tree on the samples named by `idx` (repeats allowed).
pub fn fit<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    idx: &[usize],
    cfg: TreeConfig,
    rng: &mut R,
) -> Tree {
    assert!(!idx.is_empty());
    let mut b = Builder {
        x,
        y,
        w,
        n_features: x[0].len(),
        cfg,
        rng,
        tree: Tree {
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            value: Vec::new(),
        },
    };
    b.build(idx, 0);
    b.tree
}
