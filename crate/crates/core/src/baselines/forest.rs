//! CART random forest: bootstrap samples, `ceil(sqrt(F))` candidate features
//! per split, Gini impurity, grown until pure or single-sample leaves.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const FOREST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(F))`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            min_leaf: 1,
            max_features: None,
            seed: 0,
        }
    }
}

/// Serialised as `{"split": [feature, threshold, left, right]}` or
/// `{"leaf": [count per class]}`; children index the tree's node array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split(usize, f64, usize, usize),
    Leaf(Vec<u32>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf class counts reached by `x`.
    pub fn leaf(&self, x: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split(f, t, l, r) => i = if x[*f] <= *t { *l } else { *r },
                Node::Leaf(counts) => return counts,
            }
        }
    }

    /// Majority class of the reached leaf, ties to the lower id.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax_low(self.leaf(x))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub version: u32,
    pub num_features: usize,
    pub num_classes: usize,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub votes: Vec<usize>,
}

fn argmax_low<V: PartialOrd + Copy>(v: &[V]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn rf_train(x: &[Vec<f64>], y: &[usize], num_classes: usize, cfg: &ForestConfig) -> Result<Forest> {
    if x.is_empty() {
        return Err(Error::Empty("random forest needs at least one sample".into()));
    }
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} feature rows vs {} labels", x.len(), y.len())));
    }
    if cfg.trees == 0 || cfg.min_leaf == 0 {
        return Err(Error::Config("forest: trees and min_leaf must be >= 1".into()));
    }
    let f = x[0].len();
    if f == 0 || x.iter().any(|r| r.len() != f) {
        return Err(Error::shape("feature rows must share a non-zero length"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= num_classes) {
        return Err(Error::invalid(format!("label {bad} >= {num_classes}")));
    }
    let mtry = cfg
        .max_features
        .unwrap_or_else(|| (f as f64).sqrt().ceil() as usize)
        .clamp(1, f);
    let trees = (0..cfg.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive_indexed(cfg.seed, "rf/tree", t as u64));
            let boot: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
            let mut b = Builder {
                x,
                y,
                k: num_classes,
                mtry,
                min_leaf: cfg.min_leaf,
                rng,
                nodes: Vec::new(),
            };
            b.grow(boot);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(Forest {
        version: FOREST_VERSION,
        num_features: f,
        num_classes,
        seed: cfg.seed,
        trees,
    })
}

pub fn rf_predict(forest: &Forest, x: &[f64]) -> Result<Prediction> {
    if x.len() != forest.num_features {
        return Err(Error::shape(format!(
            "feature row of length {} for a forest over {}",
            x.len(),
            forest.num_features
        )));
    }
    let mut votes = vec![0; forest.num_classes];
    for t in &forest.trees {
        votes[t.predict(x)] += 1;
    }
    Ok(Prediction {
        class: argmax_low(&votes),
        votes,
    })
}

impl Forest {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::parse(s, Path::new("<forest>"))
    }

    fn parse(s: &str, path: &Path) -> Result<Self> {
        let f: Forest = serde_json::from_str(s).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if f.version != FOREST_VERSION {
            return Err(Error::invalid(format!("unsupported forest version {}", f.version)));
        }
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        for t in &self.trees {
            let n = t.nodes.len();
            if n == 0 {
                return Err(Error::invalid("empty tree"));
            }
            for node in &t.nodes {
                match node {
                    Node::Split(f, _, l, r) if *f >= self.num_features || *l >= n || *r >= n => {
                        return Err(Error::invalid("split node out of range"));
                    }
                    Node::Leaf(c) if c.len() != self.num_classes || c.iter().all(|&v| v == 0) => {
                        return Err(Error::invalid("leaf with bad class distribution"));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&s, path)
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    k: usize,
    mtry: usize,
    min_leaf: usize,
    rng: seed::Rng,
    nodes: Vec<Node>,
}

fn gini(counts: &[u32], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut c = vec![0; self.k];
        idx.iter().for_each(|&i| c[self.y[i]] += 1);
        c
    }

    fn grow(&mut self, idx: Vec<usize>) -> usize {
        let counts = self.counts(&idx);
        let id = self.nodes.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if pure || idx.len() < 2 * self.min_leaf {
            None
        } else {
            self.best_split(&idx, &counts)
        };
        let Some((feat, thr)) = split else {
            self.nodes.push(Node::Leaf(counts));
            return id;
        };
        self.nodes.push(Node::Leaf(Vec::new()));
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[i][feat] <= thr);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[id] = Node::Split(feat, thr, left, right);
        id
    }

    /// Best Gini split over a random feature subset. Features that are
    /// constant on this node do not count towards the subset when another
    /// feature can still split.
    fn best_split(&mut self, idx: &[usize], total: &[u32]) -> Option<(usize, f64)> {
        let f = self.x[0].len();
        let n = idx.len() as u32;
        let parent = gini(total, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let order = sample(&mut self.rng, f, f).into_vec();
        let mut tried = 0;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(idx.len());
        for feat in order {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            sorted.clear();
            sorted.extend(idx.iter().map(|&i| (self.x[i][feat], self.y[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            if sorted[0].0 == sorted[sorted.len() - 1].0 {
                continue;
            }
            tried += 1;
            let mut left = vec![0u32; self.k];
            for j in 0..sorted.len() - 1 {
                left[sorted[j].1] += 1;
                if sorted[j].0 == sorted[j + 1].0 {
                    continue;
                }
                let nl = j as u32 + 1;
                let nr = n - nl;
                if (nl as usize) < self.min_leaf || (nr as usize) < self.min_leaf {
                    continue;
                }
                let right: Vec<u32> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let w = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                if best.is_none_or(|(bw, _, _)| w < bw) {
                    best = Some((w, feat, 0.5 * (sorted[j].0 + sorted[j + 1].0)));
                }
            }
        }
        best.filter(|&(w, _, _)| w < parent || parent > 0.0)
            .map(|(_, feat, thr)| (feat, thr))
    }
}
