//! Random forest regression with CART trees.
//!
//! Candidate split points are precomputed per feature: midpoints between
//! consecutive distinct values when a feature has at most `max_bins`
//! distinct values (exact CART), otherwise midpoints at evenly spaced
//! quantiles. Each node then evaluates splits from per-bin sums.

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NeteError, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(p))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub max_bins: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 5,
            max_features: None,
            bootstrap: true,
            max_bins: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
    n_features: usize,
}

impl RandomForest {
    pub fn fit(features: &Array2<f64>, target: &[f64], cfg: &ForestConfig, seed: u64) -> Result<Self> {
        let n = features.nrows();
        let p = features.ncols();
        if n != target.len() {
            return Err(NeteError::InvalidTable("features and target differ in length".into()));
        }
        if n == 0 || p == 0 {
            return Err(NeteError::InsufficientSample { needed: 1, got: n });
        }
        if cfg.n_trees == 0 || cfg.min_leaf == 0 || cfg.max_bins < 2 {
            return Err(NeteError::Config(
                "forest needs n_trees >= 1, min_leaf >= 1 and max_bins >= 2".into(),
            ));
        }
        let binned = Binned::new(features, cfg.max_bins);
        let mtry = cfg
            .max_features
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
            .clamp(1, p);

        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(seed, &[t as u64]);
                let rows: Vec<usize> = if cfg.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                TreeBuilder {
                    binned: &binned,
                    target,
                    cfg,
                    mtry,
                    nodes: Vec::new(),
                }
                .build(rows, &mut rng)
            })
            .collect();
        Ok(Self { trees, n_features: p })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_view(&self, row: ArrayView1<'_, f64>) -> f64 {
        match row.as_slice() {
            Some(s) => self.predict(s),
            None => self.predict(&row.to_vec()),
        }
    }
}

/// Column-major bin codes plus the split threshold of each bin boundary.
struct Binned {
    codes: Vec<Vec<u16>>,
    cuts: Vec<Vec<f64>>,
}

impl Binned {
    fn new(features: &Array2<f64>, max_bins: usize) -> Self {
        let max_bins = max_bins.min(u16::MAX as usize);
        let mut codes = Vec::with_capacity(features.ncols());
        let mut cuts = Vec::with_capacity(features.ncols());
        for col in features.columns() {
            let mut sorted: Vec<f64> = col.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mut distinct = sorted.clone();
            distinct.dedup();
            let c: Vec<f64> = if distinct.len() <= max_bins {
                distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let n = sorted.len();
                let mut c: Vec<f64> = (1..max_bins)
                    .filter_map(|b| {
                        let pos = b * n / max_bins;
                        let (lo, hi) = (sorted[pos - 1], sorted[pos]);
                        (lo < hi).then(|| 0.5 * (lo + hi))
                    })
                    .collect();
                c.dedup();
                c
            };
            // bin b holds values in (c[b-1], c[b]]
            codes.push(col.iter().map(|v| c.partition_point(|cut| cut < v) as u16).collect());
            cuts.push(c);
        }
        Self { codes, cuts }
    }
}

struct TreeBuilder<'a> {
    binned: &'a Binned,
    target: &'a [f64],
    cfg: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    bin: usize,
    score: f64,
}

impl TreeBuilder<'_> {
    fn build<R: Rng>(mut self, rows: Vec<usize>, rng: &mut R) -> RegressionTree {
        let mut rows = rows;
        self.grow(&mut rows, 0, rng);
        RegressionTree { nodes: self.nodes }
    }

    fn grow<R: Rng>(&mut self, rows: &mut [usize], depth: usize, rng: &mut R) -> usize {
        let idx = self.nodes.len();
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| self.target[r]).sum();
        let mean = sum / n as f64;
        self.nodes.push(Node::Leaf(mean));

        let first = self.target[rows[0]];
        let constant = rows.iter().all(|&r| self.target[r] == first);
        if constant {
            self.nodes[idx] = Node::Leaf(first);
            return idx;
        }
        if depth >= self.cfg.max_depth || n < 2 * self.cfg.min_leaf {
            return idx;
        }
        let Some(best) = self.best_split(rows, sum, rng) else {
            return idx;
        };

        let codes = &self.binned.codes[best.feature];
        let mut split = 0;
        for i in 0..n {
            if (codes[rows[i]] as usize) <= best.bin {
                rows.swap(i, split);
                split += 1;
            }
        }
        let threshold = self.binned.cuts[best.feature][best.bin];
        let (left_rows, right_rows) = rows.split_at_mut(split);
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        self.nodes[idx] = Node::Split {
            feature: best.feature,
            threshold,
            left,
            right,
        };
        idx
    }

    fn best_split<R: Rng>(&self, rows: &[usize], sum: f64, rng: &mut R) -> Option<BestSplit> {
        let n = rows.len();
        let p = self.binned.codes.len();
        let min_leaf = self.cfg.min_leaf;
        let parent = sum * sum / n as f64;
        let mut best: Option<BestSplit> = None;

        for feature in sample(rng, p, self.mtry).into_iter() {
            let cuts = &self.binned.cuts[feature];
            if cuts.is_empty() {
                continue;
            }
            let codes = &self.binned.codes[feature];
            let n_bins = cuts.len() + 1;
            let mut counts = vec![0usize; n_bins];
            let mut sums = vec![0.0f64; n_bins];
            for &r in rows {
                let b = codes[r] as usize;
                counts[b] += 1;
                sums[b] += self.target[r];
            }
            let (mut n_left, mut s_left) = (0usize, 0.0f64);
            for bin in 0..n_bins - 1 {
                n_left += counts[bin];
                s_left += sums[bin];
                let n_right = n - n_left;
                if n_left < min_leaf {
                    continue;
                }
                if n_right < min_leaf {
                    break;
                }
                let s_right = sum - s_left;
                let score = s_left * s_left / n_left as f64 + s_right * s_right / n_right as f64;
                if score > parent * (1.0 + 1e-12) + 1e-12
                    && best.as_ref().is_none_or(|b| score > b.score)
                {
                    best = Some(BestSplit { feature, bin, score });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn toy(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = seeded(seed);
        let x = Array2::from_shape_simple_fn((n, 3), || rng.random::<f64>());
        let y = x
            .rows()
            .into_iter()
            .map(|r| if r[0] > 0.5 { 2.0 } else { -1.0 } + r[1] * r[1] + 0.1 * rng.random::<f64>())
            .collect();
        (x, y)
    }

    #[test]
    fn constant_target_predicts_constant() {
        let (x, _) = toy(200, 1);
        let y = vec![0.1; 200];
        let rf = RandomForest::fit(&x, &y, &ForestConfig::default(), 3).unwrap();
        for row in x.rows() {
            assert!((rf.predict_view(row) - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn beats_mean_predictor_out_of_sample() {
        let (x, y) = toy(3_000, 2);
        let (xt, yt) = toy(1_000, 3);
        let rf = RandomForest::fit(&x, &y, &ForestConfig::default(), 4).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let mse_rf: f64 = xt.rows().into_iter().zip(&yt).map(|(r, t)| (rf.predict_view(r) - t).powi(2)).sum();
        let mse_mean: f64 = yt.iter().map(|t| (mean - t).powi(2)).sum();
        assert!(mse_rf < 0.1 * mse_mean, "{mse_rf} vs {mse_mean}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (x, y) = toy(500, 5);
        let cfg = ForestConfig { n_trees: 20, ..ForestConfig::default() };
        let a = RandomForest::fit(&x, &y, &cfg, 11).unwrap();
        let b = RandomForest::fit(&x, &y, &cfg, 11).unwrap();
        assert_eq!(a, b);
        let c = RandomForest::fit(&x, &y, &cfg, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn respects_depth_and_leaf_limits() {
        let (x, y) = toy(1_000, 6);
        let cfg = ForestConfig {
            n_trees: 5,
            max_depth: 2,
            min_leaf: 50,
            bootstrap: false,
            ..ForestConfig::default()
        };
        let rf = RandomForest::fit(&x, &y, &cfg, 0).unwrap();
        for tree in &rf.trees {
            assert!(tree.n_leaves() <= 4);
        }
    }

    #[test]
    fn binary_feature_splits_exactly() {
        // one binary feature, target equals it: a single split at 0.5 is exact
        let x = Array2::from_shape_fn((100, 1), |(i, _)| (i % 2) as f64);
        let y: Vec<f64> = x.column(0).to_vec();
        let cfg = ForestConfig { n_trees: 3, bootstrap: false, ..ForestConfig::default() };
        let rf = RandomForest::fit(&x, &y, &cfg, 0).unwrap();
        assert_eq!(rf.predict(&[0.0]), 0.0);
        assert_eq!(rf.predict(&[1.0]), 1.0);
        assert_eq!(rf.predict(&[0.4]), 0.0);
    }
}
