//! Bank of regression models (healthy plus one per fault), residuals and
//! classifier feature vectors.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::envsim::SystemSample;
use crate::error::{Error, Result};
use crate::faults::{FaultClass, Task};
use crate::mlpkit::{self, MlpNetwork, Normalizer, TrainConfig, TrainReport};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankConfig {
    pub hidden: usize,
    pub train_frac: f64,
    pub lm: TrainConfig,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            hidden: 10,
            train_frac: 0.7,
            lm: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankModel {
    pub class: FaultClass,
    pub net: MlpNetwork,
    pub x_norm: Normalizer,
    pub y_norm: Normalizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBank {
    pub task: Task,
    pub models: Vec<BankModel>,
}

/// Validation statistics on the normalized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationStats {
    pub mse: f64,
    pub error_mean: f64,
    pub error_std: f64,
    pub correlation_r: Option<f64>,
    pub rmse: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFitReport {
    pub class: FaultClass,
    pub train: TrainReport,
    pub validation: ValidationStats,
}

pub fn model_inputs(s: &SystemSample) -> [f64; 2] {
    [s.env.irradiance, s.env.temperature]
}

pub fn model_outputs(task: Task, s: &SystemSample) -> Vec<f64> {
    match task {
        Task::System5class => vec![s.load_current],
        Task::Pv3class => vec![s.pv.voltage, s.pv.current],
    }
}

fn n_out(task: Task) -> usize {
    match task {
        Task::System5class => 1,
        Task::Pv3class => 2,
    }
}

pub fn fit_bank(
    task: Task,
    datasets: &[(FaultClass, Vec<SystemSample>)],
    cfg: &BankConfig,
) -> Result<(ModelBank, Vec<ModelFitReport>)> {
    cfg.lm.validate()?;
    if cfg.hidden == 0 {
        return Err(Error::Config("hidden width must be positive".into()));
    }
    if !(cfg.train_frac > 0.0 && cfg.train_frac < 1.0) {
        return Err(Error::Config("train_frac must lie in (0, 1)".into()));
    }
    for (i, (c, _)) in datasets.iter().enumerate() {
        if task.index_of(*c).is_none() {
            return Err(Error::Config(format!("class `{c}` is not part of task {}", task.token())));
        }
        if datasets[..i].iter().any(|(d, _)| d == c) {
            return Err(Error::Config(format!("duplicate dataset for class `{c}`")));
        }
    }
    let mut models = Vec::new();
    let mut reports = Vec::new();
    for &class in task.classes() {
        let data = datasets
            .iter()
            .find(|(c, _)| *c == class)
            .map(|(_, d)| d)
            .ok_or_else(|| Error::Config(format!("missing dataset for class `{class}`")))?;
        if data.len() < 100 {
            return Err(Error::Config(format!(
                "class `{class}` has {} samples, at least 100 required",
                data.len()
            )));
        }
        let (m, r) = fit_one(task, class, data, cfg)?;
        log::info!(
            "fit {}: train mse {:.3e}, validation mse {:.3e}",
            class,
            r.train.final_mse,
            r.validation.mse
        );
        models.push(m);
        reports.push(r);
    }
    Ok((ModelBank { task, models }, reports))
}

fn fit_one(task: Task, class: FaultClass, data: &[SystemSample], cfg: &BankConfig) -> Result<(BankModel, ModelFitReport)> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut rng::stream(cfg.lm.seed, &format!("modelbank/split/{}", class.token())));
    let n_train = ((data.len() as f64) * cfg.train_frac).round() as usize;
    let (tr, va) = idx.split_at(n_train.clamp(1, data.len() - 1));

    let xs = |ix: &[usize]| -> Vec<Vec<f64>> { ix.iter().map(|&i| model_inputs(&data[i]).to_vec()).collect() };
    let ys = |ix: &[usize]| -> Vec<Vec<f64>> { ix.iter().map(|&i| model_outputs(task, &data[i])).collect() };
    let (x_tr, y_tr, x_va, y_va) = (xs(tr), ys(tr), xs(va), ys(va));
    let x_norm = Normalizer::fit(&x_tr)?;
    let y_norm = Normalizer::fit(&y_tr)?;
    let net0 = MlpNetwork::init(2, cfg.hidden, n_out(task), cfg.lm.seed ^ rng::fnv1a64(class.token().as_bytes()));
    let (net, train) = mlpkit::lm_train(&net0, &x_norm.apply_all(&x_tr), &y_norm.apply_all(&y_tr), &cfg.lm)?;

    let zy: Vec<f64> = y_norm.apply_all(&y_va).into_iter().flatten().collect();
    let zp: Vec<f64> = net.predict(&x_norm.apply_all(&x_va))?.into_iter().flatten().collect();
    let st = mlpkit::error_stats(&zy, &zp)?;
    let validation = ValidationStats {
        mse: st.rmse * st.rmse * n_out(task) as f64,
        error_mean: st.mean,
        error_std: st.std,
        correlation_r: st.correlation_r,
        rmse: st.rmse,
        samples: va.len(),
    };
    Ok((
        BankModel {
            class,
            net,
            x_norm,
            y_norm,
        },
        ModelFitReport {
            class,
            train,
            validation,
        },
    ))
}

impl ModelBank {
    /// Per-model predictions in physical units.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.models
            .iter()
            .map(|m| Ok(m.y_norm.invert(&m.net.forward(&m.x_norm.apply(x))?)))
            .collect()
    }

    pub fn residual_len(&self) -> usize {
        self.models.len() * n_out(self.task)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::new();
        for m in &self.models {
            let file = format!("model_{}.mlp", m.class.token());
            let path = dir.join(&file);
            fs::write(&path, m.net.to_text()).map_err(|e| Error::io(&path, e))?;
            entries.push(ManifestEntry {
                class: m.class,
                file,
                x_norm: m.x_norm.clone(),
                y_norm: m.y_norm.clone(),
            });
        }
        let manifest = BankManifest {
            format: "epsdiag-bank-v1".into(),
            task: self.task,
            class_order: self.task.classes().to_vec(),
            models: entries,
        };
        let path = dir.join("bank.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("bank.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BankManifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(&path, e.line(), e.to_string()))?;
        if manifest.class_order != manifest.task.classes() {
            return Err(Error::format(&path, 1, "class order does not match the task"));
        }
        let mut models = Vec::new();
        for &class in manifest.task.classes() {
            let e = manifest
                .models
                .iter()
                .find(|e| e.class == class)
                .ok_or_else(|| Error::format(&path, 1, format!("no model for class `{class}`")))?;
            let mp = dir.join(&e.file);
            let text = fs::read_to_string(&mp).map_err(|err| Error::io(&mp, err))?;
            let net = MlpNetwork::from_text(&text, &mp)?;
            let [d_in, _, d_out] = net.layer_sizes();
            if d_in != 2 || d_out != n_out(manifest.task) || e.x_norm.dim() != 2 || e.y_norm.dim() != d_out {
                return Err(Error::format(&mp, 2, "layer sizes do not match the task"));
            }
            models.push(BankModel {
                class,
                net,
                x_norm: e.x_norm.clone(),
                y_norm: e.y_norm.clone(),
            });
        }
        Ok(ModelBank {
            task: manifest.task,
            models,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    class: FaultClass,
    file: String,
    x_norm: Normalizer,
    y_norm: Normalizer,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankManifest {
    format: String,
    task: Task,
    class_order: Vec<FaultClass>,
    models: Vec<ManifestEntry>,
}

/// `r_i = y − ŷ_i` per model; for the PV task the pairs (ΔV, ΔI) are stacked.
pub fn residuals(bank: &ModelBank, y_observed: &[f64], x_inputs: &[f64]) -> Result<Vec<f64>> {
    crate::error::shape(n_out(bank.task), y_observed.len())?;
    crate::error::shape(2, x_inputs.len())?;
    let preds = bank.predict(x_inputs)?;
    Ok(preds
        .iter()
        .flat_map(|p| y_observed.iter().zip(p).map(|(y, q)| y - q))
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMoment {
    pub count: u64,
    pub mean: f64,
}

impl RunningMoment {
    pub fn update(self, x: f64) -> Self {
        let count = self.count + 1;
        RunningMoment {
            count,
            mean: self.mean + (x - self.mean) / count as f64,
        }
    }
}

pub fn update_moment(m: RunningMoment, i_load: f64) -> RunningMoment {
    m.update(i_load)
}

/// Per-model current moment: running mean of the observed load current
/// divided by the running mean of the model's predicted current.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentTracker {
    observed: RunningMoment,
    predicted: Vec<RunningMoment>,
}

impl MomentTracker {
    pub fn new(n_models: usize) -> Self {
        MomentTracker {
            observed: RunningMoment::default(),
            predicted: vec![RunningMoment::default(); n_models],
        }
    }

    pub fn reset(&mut self) {
        *self = MomentTracker::new(self.predicted.len());
    }

    pub fn update(&mut self, observed: f64, predicted: &[f64]) {
        self.observed = self.observed.update(observed);
        for (m, &p) in self.predicted.iter_mut().zip(predicted) {
            *m = m.update(p);
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.predicted
            .iter()
            .map(|m| {
                if m.mean.abs() > 1e-9 {
                    self.observed.mean / m.mean
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    I1,
    I2,
}

impl FeatureKind {
    pub fn token(self) -> &'static str {
        match self {
            FeatureKind::I1 => "i1",
            FeatureKind::I2 => "i2",
        }
    }
}

/// i1 is the residual vector; i2 interleaves each residual with its moment.
pub fn build_features(kind: FeatureKind, residual: &[f64], moments: Option<&[f64]>) -> Result<Vec<f64>> {
    match kind {
        FeatureKind::I1 => Ok(residual.to_vec()),
        FeatureKind::I2 => {
            let m = moments.ok_or_else(|| Error::Config("i2 features need moments".into()))?;
            crate::error::shape(residual.len(), m.len())?;
            Ok(residual.iter().zip(m).flat_map(|(&r, &e)| [r, e]).collect())
        }
    }
}

/// Streaming features for one telemetry run. Moments accumulate from the
/// start of the run and restart every `reset_every` samples when nonzero.
pub fn run_features(bank: &ModelBank, run: &[SystemSample], kind: FeatureKind, reset_every: usize) -> Result<Vec<Vec<f64>>> {
    if kind == FeatureKind::I2 && bank.task != Task::System5class {
        return Err(Error::Config("i2 features are defined for the system task only".into()));
    }
    let mut tracker = MomentTracker::new(bank.models.len());
    let mut out = Vec::with_capacity(run.len());
    for (k, s) in run.iter().enumerate() {
        if reset_every > 0 && k > 0 && k % reset_every == 0 {
            tracker.reset();
        }
        let x = model_inputs(s);
        let y = model_outputs(bank.task, s);
        let preds = bank.predict(&x)?;
        let r: Vec<f64> = preds
            .iter()
            .flat_map(|p| y.iter().zip(p).map(|(a, b)| a - b))
            .collect();
        let f = match kind {
            FeatureKind::I1 => r,
            FeatureKind::I2 => {
                let p0: Vec<f64> = preds.iter().map(|p| p[0]).collect();
                tracker.update(y[0], &p0);
                build_features(kind, &r, Some(&tracker.values()))?
            }
        };
        out.push(f);
    }
    Ok(out)
}
