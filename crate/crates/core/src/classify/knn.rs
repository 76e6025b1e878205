use serde::{Deserialize, Serialize};

use super::{error_rate, stratified_folds, LabeledDataset, LossReport, Standardizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// applied to stored points at fit time and to every query
    pub scaler: Option<Standardizer>,
}

pub fn knn_fit(train: &LabeledDataset, k: usize, standardize: bool) -> Result<KnnModel> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    if k > train.len() {
        return Err(Error::Domain(format!("k = {k} exceeds {} stored points", train.len())));
    }
    let scaler = standardize.then(|| Standardizer::fit(&train.features));
    let points = match &scaler {
        Some(s) => train.features.iter().map(|p| s.apply(p)).collect(),
        None => train.features.clone(),
    };
    Ok(KnnModel {
        k,
        points,
        labels: train.labels.clone(),
        n_classes: train.n_classes(),
        scaler,
    })
}

/// The `m` nearest stored points as (distance, index), nearest first;
/// equal distances keep stored-point order.
fn nearest(points: &[Vec<f64>], q: &[f64], m: usize) -> Vec<(f64, usize)> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(m + 1);
    for (i, p) in points.iter().enumerate() {
        let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.len() == m && d2 >= best[m - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(d, _)| d <= d2);
        best.insert(pos, (d2, i));
        best.truncate(m);
    }
    best.into_iter().map(|(d2, i)| (d2.sqrt(), i)).collect()
}

/// Majority vote; ties by smallest summed distance, then lowest class.
fn vote(neigh: &[(f64, usize)], labels: &[usize], n_classes: usize) -> usize {
    let mut count = vec![0usize; n_classes];
    let mut dist = vec![0.0f64; n_classes];
    for &(d, i) in neigh {
        count[labels[i]] += 1;
        dist[labels[i]] += d;
    }
    let mut best = 0;
    for c in 1..n_classes {
        if count[c] > count[best] || (count[c] == count[best] && dist[c] < dist[best]) {
            best = c;
        }
    }
    best
}

pub fn knn_classify(model: &KnnModel, query: &[f64]) -> Result<usize> {
    let d = model.points.first().map_or(0, |p| p.len());
    crate::error::shape(d, query.len())?;
    let q = match &model.scaler {
        Some(s) => s.apply(query),
        None => query.to_vec(),
    };
    let neigh = nearest(&model.points, &q, model.k);
    Ok(vote(&neigh, &model.labels, model.n_classes))
}

impl KnnModel {
    pub fn predict(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
        xs.iter().map(|x| knn_classify(self, x)).collect()
    }
}

/// Resubstitution and stratified k-fold loss for each k. Standardization,
/// when enabled, is refitted on each training fold.
pub fn knn_loss_curve(
    ds: &LabeledDataset,
    k_values: &[usize],
    folds: usize,
    seed: u64,
    standardize: bool,
) -> Result<Vec<(usize, LossReport)>> {
    let k_max = k_values.iter().copied().max().unwrap_or(0);
    if k_max == 0 || k_values.contains(&0) {
        return Err(Error::Domain("k values must be positive".into()));
    }
    let fold = stratified_folds(&ds.labels, ds.n_classes(), folds, seed)?;
    let smallest_train = (0..folds)
        .map(|f| fold.iter().filter(|&&x| x != f).count())
        .min()
        .unwrap_or(0);
    if k_max > smallest_train {
        return Err(Error::Domain(format!(
            "k = {k_max} exceeds the smallest training fold ({smallest_train})"
        )));
    }

    let full = knn_fit(ds, k_max, standardize)?;
    let mut resub_pred = vec![Vec::with_capacity(ds.len()); k_values.len()];
    for x in &ds.features {
        let q = match &full.scaler {
            Some(s) => s.apply(x),
            None => x.clone(),
        };
        let neigh = nearest(&full.points, &q, k_max);
        for (slot, &k) in k_values.iter().enumerate() {
            resub_pred[slot].push(vote(&neigh[..k], &full.labels, full.n_classes));
        }
    }

    let mut kfold_err = vec![0.0; k_values.len()];
    for f in 0..folds {
        let tr: Vec<usize> = (0..ds.len()).filter(|&i| fold[i] != f).collect();
        let te: Vec<usize> = (0..ds.len()).filter(|&i| fold[i] == f).collect();
        let model = knn_fit(&ds.subset(&tr), k_max, standardize)?;
        let truth: Vec<usize> = te.iter().map(|&i| ds.labels[i]).collect();
        let mut preds = vec![Vec::with_capacity(te.len()); k_values.len()];
        for &i in &te {
            let q = match &model.scaler {
                Some(s) => s.apply(&ds.features[i]),
                None => ds.features[i].clone(),
            };
            let neigh = nearest(&model.points, &q, k_max);
            for (slot, &k) in k_values.iter().enumerate() {
                preds[slot].push(vote(&neigh[..k], &model.labels, model.n_classes));
            }
        }
        for (slot, p) in preds.iter().enumerate() {
            kfold_err[slot] += error_rate(&truth, p);
        }
    }

    Ok(k_values
        .iter()
        .enumerate()
        .map(|(slot, &k)| {
            (
                k,
                LossReport {
                    resubstitution_loss: error_rate(&ds.labels, &resub_pred[slot]),
                    kfold_loss: kfold_err[slot] / folds as f64,
                    folds,
                },
            )
        })
        .collect())
}
