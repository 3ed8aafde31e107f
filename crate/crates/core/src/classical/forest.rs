use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_both_classes, FlatExample};
use crate::error::{Error, Result};
use crate::nn::Prediction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    /// Candidate features per node; `None` means `round(sqrt(d))`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 100,
            min_samples_split: 2,
            bootstrap: true,
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Training-sample class counts `[road, sidewalk]` that reached the leaf.
    Leaf { counts: [u32; 2] },
    /// `x[feature] <= threshold` goes to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes stored flat; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub max_depth: usize,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

impl Tree {
    /// Leaf vote; an even count goes to class 1.
    pub fn vote(&self, x: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return u8::from(counts[1] >= counts[0]),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

impl ForestModel {
    /// `p` is the fraction of trees voting 1.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.n_features {
            return Err(Error::shape(format!(
                "expected {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        if self.trees.is_empty() {
            return Err(Error::format("forest has no trees"));
        }
        let ones = self.trees.iter().filter(|t| t.vote(x) == 1).count();
        Ok(Prediction::from_p(ones as f64 / self.trees.len() as f64))
    }

    pub fn depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }
}

pub fn train_random_forest(data: &[FlatExample], cfg: &ForestConfig) -> Result<ForestModel> {
    if cfg.n_trees == 0 || cfg.min_samples_split < 2 {
        return Err(Error::param("forest needs at least one tree and min_samples_split >= 2"));
    }
    check_both_classes(data.iter().map(|e| e.y))?;
    let d = data[0].x.len();
    if d == 0 || data.iter().any(|e| e.x.len() != d) {
        return Err(Error::shape("all examples must have the same non-zero length"));
    }
    let k = cfg
        .max_features
        .unwrap_or_else(|| ((d as f64).sqrt().round() as usize).max(1))
        .clamp(1, d);
    let xs: Vec<f64> = data.iter().flat_map(|e| e.x.iter().copied()).collect();
    let ys: Vec<u8> = data.iter().map(|e| e.y).collect();
    let n = data.len();
    let trees = (0..cfg.n_trees)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let mut idx: Vec<u32> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n) as u32).collect()
            } else {
                (0..n as u32).collect()
            };
            let mut b = Builder {
                xs: &xs,
                ys: &ys,
                d,
                k,
                cfg,
                rng,
                nodes: Vec::new(),
                scratch: Vec::new(),
            };
            b.grow(&mut idx, 0);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel {
        n_features: d,
        max_depth: cfg.max_depth,
        seed: cfg.seed,
        trees,
    })
}

struct Builder<'a> {
    xs: &'a [f64],
    ys: &'a [u8],
    d: usize,
    k: usize,
    cfg: &'a ForestConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    scratch: Vec<(f64, u8)>,
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini(c: [u32; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = c[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

impl Builder<'_> {
    fn counts(&self, idx: &[u32]) -> [u32; 2] {
        let ones = idx.iter().filter(|&&i| self.ys[i as usize] == 1).count() as u32;
        [idx.len() as u32 - ones, ones]
    }

    /// Grows the subtree for `idx` and returns its node index.
    fn grow(&mut self, idx: &mut [u32], depth: usize) -> usize {
        let counts = self.counts(idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.cfg.max_depth || idx.len() < self.cfg.min_samples_split {
            return id;
        }
        let candidates: Vec<usize> = sample(&mut self.rng, self.d, self.k).into_vec();
        let best = self.best_split(idx, &candidates).or_else(|| {
            // every candidate was constant here; fall back to the rest
            let rest: Vec<usize> = (0..self.d).filter(|f| !candidates.contains(f)).collect();
            self.best_split(idx, &rest)
        });
        let Some(split) = best else {
            return id;
        };
        let mut mid = 0;
        for j in 0..idx.len() {
            if self.xs[idx[j] as usize * self.d + split.feature] <= split.threshold {
                idx.swap(j, mid);
                mid += 1;
            }
        }
        let (l, r) = idx.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    /// Lowest weighted Gini over all thresholds of `features`; `None` when
    /// every feature is constant on `idx`.
    fn best_split(&mut self, idx: &[u32], features: &[usize]) -> Option<Split> {
        let total = self.counts(idx);
        let n = idx.len() as f64;
        let mut best: Option<Split> = None;
        for &f in features {
            self.scratch.clear();
            self.scratch
                .extend(idx.iter().map(|&i| (self.xs[i as usize * self.d + f], self.ys[i as usize])));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left = [0u32; 2];
            for j in 0..self.scratch.len() - 1 {
                left[usize::from(self.scratch[j].1)] += 1;
                let (v, next) = (self.scratch[j].0, self.scratch[j + 1].0);
                if v == next {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let nl = (left[0] + left[1]) as f64;
                let impurity = (nl * gini(left) + (n - nl) * gini(right)) / n;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mut threshold = 0.5 * (v + next);
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }
}
