//! Fault classifiers and their evaluation.

mod id3;
mod knn;
mod mlp;
mod pca;

pub use id3::{dt_classify, dt_losses, id3_fit, DecisionTree, Node};
pub use knn::{knn_classify, knn_fit, knn_loss_curve, KnnModel};
pub use mlp::MlpClassifier;
pub use pca::{pca_fit, ClassInterval, PcaClassifier, PcaModel};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faults::FaultClass;
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    /// indices into `classes`
    pub labels: Vec<usize>,
    pub classes: Vec<FaultClass>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: Vec<FaultClass>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Domain("dataset is empty".into()));
        }
        crate::error::shape(features.len(), labels.len())?;
        let d = features[0].len();
        for row in &features {
            crate::error::shape(d, row.len())?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("non-finite feature value".into()));
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::Domain(format!("label {l} outside the class set")));
        }
        Ok(LabeledDataset {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
        }
    }

    /// Keep only the listed feature columns.
    pub fn columns(&self, cols: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self
                .features
                .iter()
                .map(|r| cols.iter().map(|&c| r[c]).collect())
                .collect(),
            labels: self.labels.clone(),
            classes: self.classes.clone(),
        }
    }
}

fn by_class(labels: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut g = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        g[l].push(i);
    }
    g
}

/// Stratified split. Returns sorted (train, validation) row indices.
pub fn split_indices(ds: &LabeledDataset, train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if ds.len() < 10 {
        return Err(Error::Domain("split needs at least 10 samples".into()));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Domain(format!("train fraction {train_frac} outside (0, 1)")));
    }
    let mut rng = rng::stream(seed, "classify/split");
    let (mut tr, mut va) = (Vec::new(), Vec::new());
    for (c, mut g) in by_class(&ds.labels, ds.n_classes()).into_iter().enumerate() {
        if g.is_empty() {
            continue;
        }
        if g.len() < 2 {
            return Err(Error::Domain(format!("class {} has fewer than 2 samples", ds.classes[c])));
        }
        g.shuffle(&mut rng);
        let n = ((g.len() as f64) * train_frac).round() as usize;
        let n = n.clamp(1, g.len() - 1);
        tr.extend_from_slice(&g[..n]);
        va.extend_from_slice(&g[n..]);
    }
    tr.sort_unstable();
    va.sort_unstable();
    Ok((tr, va))
}

pub fn split(ds: &LabeledDataset, train_frac: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let (tr, va) = split_indices(ds, train_frac, seed)?;
    Ok((ds.subset(&tr), ds.subset(&va)))
}

/// Fold id per row, stratified: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Domain("at least 2 folds required".into()));
    }
    if labels.len() < folds {
        return Err(Error::Domain(format!("{} samples cannot fill {folds} folds", labels.len())));
    }
    let mut rng = rng::stream(seed, "classify/kfold");
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for mut g in by_class(labels, n_classes) {
        g.shuffle(&mut rng);
        for i in g {
            fold[i] = next % folds;
            next += 1;
        }
    }
    Ok(fold)
}

/// Zero-mean, unit-variance map fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let mean = linalg::column_means(x);
        let std = linalg::column_stds(x, &mean)
            .into_iter()
            .map(|s| if s > 0.0 { s } else { 1.0 })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<FaultClass>,
    /// rows = true, columns = predicted
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn overall_accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.trace() as f64 / t as f64
        }
    }

    /// `None` for classes absent from the true labels.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let s: u64 = r.iter().sum();
                (s > 0).then(|| r[i] as f64 / s as f64)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for c in &self.classes {
            s.push(',');
            s.push_str(c.token());
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            s.push_str(c.token());
            for v in row {
                s.push(',');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize], classes: &[FaultClass]) -> Result<ConfusionMatrix> {
    crate::error::shape(truth.len(), predicted.len())?;
    let n = classes.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n || p >= n {
            return Err(Error::Domain(format!("label {} outside the class set", t.max(p))));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub resubstitution_loss: f64,
    pub kfold_loss: f64,
    pub folds: usize,
}

pub(crate) fn error_rate(truth: &[usize], pred: &[usize]) -> f64 {
    let wrong = truth.iter().zip(pred).filter(|(a, b)| a != b).count();
    wrong as f64 / truth.len().max(1) as f64
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
