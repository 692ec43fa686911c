//! Random forest of Gini decision trees.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, check_finite, Classifier};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestHyper {
    pub n_trees: usize,
    /// `None` grows until pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features tried per split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestHyper {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<T> {
    Leaf {
        counts: Vec<u32>,
    },
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

/// Nodes stored flat; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> DecisionTree<T> {
    pub fn leaf_counts(&self, x: ArrayView1<'_, T>) -> &[u32] {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_one(&self, x: ArrayView1<'_, T>) -> usize {
        argmax(self.leaf_counts(x))
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel<T> {
    pub trees: Vec<DecisionTree<T>>,
    pub n_classes: usize,
    pub n_features: usize,
    pub hyper: ForestHyper,
}

impl<T: Scalar> Classifier<T> for ForestModel<T> {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_one(&self, x: ArrayView1<'_, T>) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict_one(x)] += 1;
        }
        argmax(&votes)
    }
}

fn gini(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = f64::from(total);
    1.0 - counts.iter().map(|&c| (f64::from(c) / t).powi(2)).sum::<f64>()
}

struct Builder<'a, T> {
    x: ArrayView2<'a, T>,
    y: &'a [usize],
    n_classes: usize,
    max_features: usize,
    hyper: &'a ForestHyper,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Builder<'_, T> {
    fn counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut StreamRng) -> usize {
        let counts = self.counts(&idx);
        let pure = counts.iter().filter(|c| **c > 0).count() <= 1;
        let depth_capped = self.hyper.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_capped || idx.len() < self.hyper.min_samples_split.max(2) {
            return self.push(Node::Leaf { counts });
        }
        let Some((feature, threshold)) = self.best_split(&idx, &counts, rng) else {
            return self.push(Node::Leaf { counts });
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[[i, feature]] <= threshold);
        let me = self.push(Node::Leaf { counts: Vec::new() });
        let left = self.grow(left_idx, depth + 1, rng);
        let right = self.grow(right_idx, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }

    fn push(&mut self, node: Node<T>) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Lowest weighted child Gini over a random feature subset. Features
    /// that cannot split (all values equal) are skipped.
    fn best_split(&self, idx: &[usize], parent: &[u32], rng: &mut StreamRng) -> Option<(usize, T)> {
        let d = self.x.ncols();
        let total = idx.len() as u32;
        let mut best: Option<(f64, usize, T)> = None;
        let mut sorted: Vec<(T, usize)> = Vec::with_capacity(idx.len());
        for feature in sample(rng, d, self.max_features.min(d)).into_iter() {
            sorted.clear();
            sorted.extend(idx.iter().map(|&i| (self.x[[i, feature]], self.y[i])));
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
            let mut left = vec![0u32; self.n_classes];
            let mut right = parent.to_vec();
            for k in 0..sorted.len() - 1 {
                let (v, c) = sorted[k];
                left[c] += 1;
                right[c] -= 1;
                let next = sorted[k + 1].0;
                if next <= v {
                    continue;
                }
                let nl = (k + 1) as u32;
                let nr = total - nl;
                let score = (f64::from(nl) * gini(&left, nl) + f64::from(nr) * gini(&right, nr)) / f64::from(total);
                if best.as_ref().is_none_or(|b| score < b.0) {
                    let mid = v + (next - v) / T::lit(2.0);
                    // guard against midpoint rounding onto the upper value
                    let threshold = if mid < next { mid } else { v };
                    best = Some((score, feature, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn fit_tree<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: &[usize],
    n_classes: usize,
    hyper: &ForestHyper,
    tree_index: usize,
) -> DecisionTree<T> {
    let mut rng = rng::stream(hyper.seed, tree_index as u64);
    let n = x.nrows();
    let idx: Vec<usize> = if hyper.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let d = x.ncols();
    let max_features = hyper
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let mut b = Builder {
        x,
        y,
        n_classes,
        max_features,
        hyper,
        nodes: Vec::new(),
    };
    b.grow(idx, 0, &mut rng);
    DecisionTree { nodes: b.nodes }
}

/// Bagged Gini trees; a single-class `y` yields single-leaf trees.
pub fn fit_forest<T: Scalar>(x: ArrayView2<'_, T>, y: &[usize], hyper: &ForestHyper) -> Result<ForestModel<T>> {
    if y.len() != x.nrows() {
        return Err(Error::argument(format!("{} labels for {} rows", y.len(), x.nrows())));
    }
    if x.nrows() < 2 {
        return Err(Error::Fit("random forest needs at least two samples".into()));
    }
    if hyper.n_trees == 0 {
        return Err(Error::argument("random forest needs at least one tree"));
    }
    check_finite(x)?;
    let n_classes = y.iter().max().map_or(1, |m| m + 1);
    let trees = (0..hyper.n_trees)
        .map(|t| fit_tree(x, y, n_classes, hyper, t))
        .collect();
    Ok(ForestModel {
        trees,
        n_classes,
        n_features: x.ncols(),
        hyper: *hyper,
    })
}
