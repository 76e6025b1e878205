use super::{argmax, LabeledDataset};
use crate::error::{Error, Result};
use crate::mlpkit::{self, MlpNetwork, Normalizer, TrainConfig, TrainReport};

/// One-hot MLP classifier over min-max normalized features.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    pub norm: Normalizer,
    pub net: MlpNetwork,
    pub n_classes: usize,
}

impl MlpClassifier {
    pub fn train(train: &LabeledDataset, hidden: usize, cfg: &TrainConfig) -> Result<(Self, TrainReport)> {
        if hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        let k = train.n_classes();
        let norm = Normalizer::fit(&train.features)?;
        let xs = norm.apply_all(&train.features);
        let ys: Vec<Vec<f64>> = train
            .labels
            .iter()
            .map(|&l| (0..k).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
            .collect();
        let net0 = MlpNetwork::init(train.dim(), hidden, k, cfg.seed);
        let (net, report) = mlpkit::lm_train(&net0, &xs, &ys, cfg)?;
        Ok((
            MlpClassifier {
                norm,
                net,
                n_classes: k,
            },
            report,
        ))
    }

    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.net.forward(&self.norm.apply(x))?))
    }

    pub fn predict(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
        xs.iter().map(|x| self.classify(x)).collect()
    }
}
