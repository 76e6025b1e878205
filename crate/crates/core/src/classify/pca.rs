use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Standardizer};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// row-major d × d, column j = j-th principal direction
    pub q: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub dim: usize,
}

/// Eigendecomposition of the sample covariance. With `center = false` the
/// mean is taken as zero.
pub fn pca_fit(features: &[Vec<f64>], center: bool) -> Result<PcaModel> {
    if features.len() < 2 {
        return Err(Error::Domain("PCA needs at least two samples".into()));
    }
    let dim = features[0].len();
    if dim == 0 {
        return Err(Error::Domain("PCA needs at least one feature".into()));
    }
    for r in features {
        crate::error::shape(dim, r.len())?;
    }
    let mean = if center {
        linalg::column_means(features)
    } else {
        vec![0.0; dim]
    };
    let cov = linalg::covariance(features, &mean);
    let eig = linalg::jacobi_eigen(&cov, dim, 1e-12)?;
    Ok(PcaModel {
        mean,
        q: eig.vectors,
        // round-off can leave tiny negatives on rank-deficient data
        eigenvalues: eig.values.into_iter().map(|v| v.max(0.0)).collect(),
        dim,
    })
}

impl PcaModel {
    /// `y = Qᵀ(x − mean)`
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::error::shape(self.dim, x.len())?;
        let d = self.dim;
        Ok((0..d)
            .map(|j| (0..d).map(|i| self.q[i * d + j] * (x[i] - self.mean[i])).sum())
            .collect())
    }

    pub fn first_component(&self, x: &[f64]) -> Result<f64> {
        crate::error::shape(self.dim, x.len())?;
        let d = self.dim;
        Ok((0..d).map(|i| self.q[i * d] * (x[i] - self.mean[i])).sum())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.q[i * self.dim + j]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassInterval {
    pub center: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Classifies by per-class `[mean ± 3σ]` intervals on the first component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaClassifier {
    pub scaler: Option<Standardizer>,
    pub model: PcaModel,
    /// `None` for classes without training samples
    pub intervals: Vec<Option<ClassInterval>>,
}

impl PcaClassifier {
    pub fn fit(train: &LabeledDataset, standardize: bool, center: bool) -> Result<Self> {
        let scaler = standardize.then(|| Standardizer::fit(&train.features));
        let x: Vec<Vec<f64>> = match &scaler {
            Some(s) => train.features.iter().map(|r| s.apply(r)).collect(),
            None => train.features.clone(),
        };
        let model = pca_fit(&x, center)?;
        let mut proj = vec![Vec::new(); train.n_classes()];
        for (r, &l) in x.iter().zip(&train.labels) {
            proj[l].push(model.first_component(r)?);
        }
        let intervals = proj
            .iter()
            .map(|p| {
                (!p.is_empty()).then(|| {
                    let n = p.len() as f64;
                    let center = p.iter().sum::<f64>() / n;
                    let sigma = (p.iter().map(|v| (v - center) * (v - center)).sum::<f64>() / n).sqrt();
                    ClassInterval {
                        center,
                        sigma,
                        lo: center - 3.0 * sigma,
                        hi: center + 3.0 * sigma,
                    }
                })
            })
            .collect();
        Ok(PcaClassifier {
            scaler,
            model,
            intervals,
        })
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        match &self.scaler {
            Some(s) => self.model.first_component(&s.apply(x)),
            None => self.model.first_component(x),
        }
    }

    /// Nearest interval (distance 0 inside); ties by nearest center, then
    /// lowest class index.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        let y = self.score(x)?;
        let mut best: Option<(f64, f64, usize)> = None;
        for (c, iv) in self.intervals.iter().enumerate() {
            let Some(iv) = iv else { continue };
            let gap = (iv.lo - y).max(y - iv.hi).max(0.0);
            let dc = (y - iv.center).abs();
            let better = match best {
                None => true,
                Some((g, d, _)) => gap < g || (gap == g && dc < d),
            };
            if better {
                best = Some((gap, dc, c));
            }
        }
        best.map(|(_, _, c)| c)
            .ok_or_else(|| Error::State("PCA classifier has no class intervals".into()))
    }

    pub fn predict(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
        xs.iter().map(|x| self.classify(x)).collect()
    }
}
