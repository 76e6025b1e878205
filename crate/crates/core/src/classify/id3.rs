use serde::{Deserialize, Serialize};

use super::{error_rate, stratified_folds, LabeledDataset, LossReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        label: usize,
        counts: Vec<usize>,
    },
    /// `x[feature] <= threshold` goes left
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub max_depth: usize,
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    // best (gain, feature, threshold)
    fn best_split(&self, idx: &[usize], counts: &[usize]) -> Option<(f64, usize, f64)> {
        let n = idx.len();
        let h = entropy(counts, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x[0].len() {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = vec![0usize; self.n_classes];
            let mut right = counts.to_vec();
            for pos in 0..n - 1 {
                let i = order[pos];
                left[self.y[i]] += 1;
                right[self.y[i]] -= 1;
                let (v, w) = (self.x[i][f], self.x[order[pos + 1]][f]);
                let nl = pos + 1;
                if v == w || nl < self.min_leaf || n - nl < self.min_leaf {
                    continue;
                }
                let gain = h
                    - (nl as f64 / n as f64) * entropy(&left, nl)
                    - ((n - nl) as f64 / n as f64) * entropy(&right, n - nl);
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (v + w)));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            label: majority(&counts),
            counts: counts.clone(),
        });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth || idx.len() < 2 * self.min_leaf.max(1) {
            return id;
        }
        let Some((gain, feature, threshold)) = self.best_split(&idx, &counts) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            gain,
            left,
            right,
        };
        id
    }
}

/// Greedy binary ID3 on continuous features (entropy in bits, midpoint
/// thresholds). Stops on purity, `max_depth`, or when no split leaves
/// `min_leaf` samples on both sides.
pub fn id3_fit(train: &LabeledDataset, max_depth: usize, min_leaf: usize) -> Result<DecisionTree> {
    if train.is_empty() {
        return Err(Error::Domain("empty training set".into()));
    }
    if min_leaf == 0 {
        return Err(Error::Config("min_leaf must be at least 1".into()));
    }
    let mut b = Builder {
        x: &train.features,
        y: &train.labels,
        n_classes: train.n_classes(),
        max_depth,
        min_leaf,
        nodes: Vec::new(),
    };
    b.grow((0..train.len()).collect(), 0);
    Ok(DecisionTree {
        nodes: b.nodes,
        n_features: train.dim(),
        max_depth,
    })
}

pub fn dt_classify(tree: &DecisionTree, x: &[f64]) -> Result<usize> {
    crate::error::shape(tree.n_features, x.len())?;
    let mut at = 0;
    loop {
        match &tree.nodes[at] {
            Node::Leaf { label, .. } => return Ok(*label),
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => at = if x[*feature] <= *threshold { *left } else { *right },
        }
    }
}

impl DecisionTree {
    pub fn predict(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
        xs.iter().map(|x| dt_classify(self, x)).collect()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, at: usize) -> usize {
            match &t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn gains(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { gain, .. } => Some(*gain),
                _ => None,
            })
            .collect()
    }
}

pub fn dt_losses(ds: &LabeledDataset, max_depth: usize, min_leaf: usize, folds: usize, seed: u64) -> Result<LossReport> {
    let tree = id3_fit(ds, max_depth, min_leaf)?;
    let resub = error_rate(&ds.labels, &tree.predict(&ds.features)?);
    let fold = stratified_folds(&ds.labels, ds.n_classes(), folds, seed)?;
    let mut sum = 0.0;
    for f in 0..folds {
        let tr: Vec<usize> = (0..ds.len()).filter(|&i| fold[i] != f).collect();
        let te: Vec<usize> = (0..ds.len()).filter(|&i| fold[i] == f).collect();
        let t = id3_fit(&ds.subset(&tr), max_depth, min_leaf)?;
        let test = ds.subset(&te);
        sum += error_rate(&test.labels, &t.predict(&test.features)?);
    }
    Ok(LossReport {
        resubstitution_loss: resub,
        kfold_loss: sum / folds as f64,
        folds,
    })
}
