//! Batch commands: gen-data, fit-bank, train-eval, compare.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::classify::{
    self, confusion, dt_losses, id3_fit, knn_fit, knn_loss_curve, ConfusionMatrix, LabeledDataset, LossReport,
    MlpClassifier, PcaClassifier,
};
use crate::config::RunConfig;
use crate::envsim::{self, ScenarioConfig, SystemSample};
use crate::error::{Error, Result};
use crate::faults::{self, FaultClass, Task};
use crate::io;
use crate::modelbank::{self, BankConfig, FeatureKind, ModelBank, ModelFitReport};
use crate::mlpkit::StopReason;

pub const TOOL: &str = "epsdiag";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub task: Task,
    /// input directories, relative to the output directory
    pub inputs: Vec<String>,
    /// relative to the output directory
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_unix_s: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix_s: Option<u64>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.line(), e.to_string()))
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

// Tracks files written into one output directory.
struct Out {
    dir: PathBuf,
    files: Vec<String>,
    manifest: RunManifest,
    opts: RunOptions,
}

impl Out {
    fn new(dir: &Path, command: &str, cfg: &RunConfig, task: Task, inputs: &[&Path], opts: RunOptions) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let base = dir.canonicalize().map_err(|e| Error::io(dir, e))?;
        let inputs = inputs
            .iter()
            .map(|p| {
                let abs = p.canonicalize().map_err(|e| Error::io(p, e))?;
                let rel = pathdiff::diff_paths(&abs, &base).unwrap_or(abs);
                Ok(rel.display().to_string())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Out {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            manifest: RunManifest {
                tool: TOOL.into(),
                version: VERSION.into(),
                command: command.into(),
                config_hash: cfg.hash(),
                seed: cfg.seed,
                task,
                inputs,
                outputs: Vec::new(),
                started_unix_s: (!opts.no_timestamp).then(now),
                finished_unix_s: None,
            },
            opts,
        })
    }

    fn text(&mut self, rel: &str, text: &str) -> Result<()> {
        io::write_text(&self.dir.join(rel), text)?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, v: &T) -> Result<()> {
        self.text(rel, &io::to_json(v))
    }

    fn finish(mut self) -> Result<RunManifest> {
        self.files.sort();
        self.manifest.outputs = self.files;
        self.manifest.finished_unix_s = (!self.opts.no_timestamp).then(now);
        io::write_json(&self.dir.join(MANIFEST), &self.manifest)?;
        Ok(self.manifest)
    }
}

/// Environment seed of the noise-free identification runs.
pub fn ident_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub fn telemetry_file(c: FaultClass) -> String {
    format!("telemetry_{}.csv", c.token())
}

fn scenario(cfg: &RunConfig, fault: FaultClass, seed: u64) -> ScenarioConfig {
    let s = &cfg.simulate;
    ScenarioConfig {
        sample_count: s.sample_count,
        seed,
        timestep_s: s.timestep_s,
        fault,
        fault_params: cfg.faults.params.clone(),
        plant: s.plant.clone(),
        env: s.env.clone(),
        noise_sigma_frac: s.noise_sigma_frac,
        soc_noise_frac: s.soc_noise_frac,
    }
}

/// One run per task class, all on a shared environment profile. `noisy =
/// false` gives the identification set used to fit the bank.
pub fn simulate_task(cfg: &RunConfig, noisy: bool) -> Result<Vec<(FaultClass, Vec<SystemSample>)>> {
    let seed = if noisy { cfg.seed } else { ident_seed(cfg.seed) };
    let env = envsim::generate_env_profile_with(cfg.simulate.sample_count, seed, &cfg.simulate.env)?;
    cfg.simulate
        .task
        .classes()
        .iter()
        .map(|&c| {
            let mut sc = scenario(cfg, c, seed);
            if !noisy {
                sc = sc.noiseless();
            }
            let run = envsim::simulate_on(&sc, &env)?;
            if run.battery_saturations > 0 {
                log::debug!("{c}: battery limits reached on {} samples", run.battery_saturations);
            }
            Ok((c, run.samples))
        })
        .collect()
}

pub fn bank_config(cfg: &RunConfig) -> BankConfig {
    BankConfig {
        hidden: cfg.train.hidden,
        train_frac: cfg.train.train_frac,
        lm: cfg.train.lm.to_train_config(cfg.seed),
    }
}

pub fn cmd_gen_data(cfg: &RunConfig, out_dir: &Path, opts: RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    let task = cfg.simulate.task;
    let mut out = Out::new(out_dir, "gen-data", cfg, task, &[], opts)?;
    for (c, samples) in simulate_task(cfg, true)? {
        out.text(&telemetry_file(c), &io::telemetry_csv(&samples))?;
    }
    for (c, samples) in simulate_task(cfg, false)? {
        out.text(&format!("ident/{}", telemetry_file(c)), &io::telemetry_csv(&samples))?;
    }
    let schedule = faults::sample_schedule(&cfg.rates(), cfg.faults.schedule_horizon_h, cfg.seed)?;
    out.json("fault_schedule.json", &schedule)?;
    out.text("config.toml", &cfg.to_toml())?;
    log::info!("gen-data: {} classes x {} samples", task.classes().len(), cfg.simulate.sample_count);
    out.finish()
}

pub fn load_runs(dir: &Path, task: Task) -> Result<Vec<(FaultClass, Vec<SystemSample>)>> {
    task.classes()
        .iter()
        .map(|&c| {
            let path = dir.join(telemetry_file(c));
            if !path.exists() {
                return Err(Error::Config(format!("missing telemetry for class `{c}`: {}", path.display())));
            }
            let run = io::read_telemetry(&path)?;
            if let Some(s) = run.iter().find(|s| s.fault != c) {
                return Err(Error::format(&path, 2, format!("row labelled `{}` in the `{c}` file", s.fault)));
            }
            Ok((c, run))
        })
        .collect()
}

fn data_task(data_dir: &Path) -> Result<Task> {
    Ok(RunManifest::load(data_dir)?.task)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankReport {
    pub task: Task,
    pub seed: u64,
    pub hidden: usize,
    pub models: Vec<ModelFitReport>,
}

pub fn cmd_fit_bank(cfg: &RunConfig, data_dir: &Path, out_dir: &Path, opts: RunOptions) -> Result<(ModelBank, BankReport)> {
    cfg.validate()?;
    let task = data_task(data_dir)?;
    let runs = load_runs(&data_dir.join("ident"), task)?;
    let (bank, models) = modelbank::fit_bank(task, &runs, &bank_config(cfg))?;
    let mut out = Out::new(out_dir, "fit-bank", cfg, task, &[data_dir], opts)?;
    bank.save(out_dir)?;
    out.files.push("bank.json".into());
    out.files.extend(bank.models.iter().map(|m| format!("model_{}.mlp", m.class.token())));
    let report = BankReport {
        task,
        seed: cfg.seed,
        hidden: cfg.train.hidden,
        models,
    };
    out.json("fit_report.json", &report)?;
    out.finish()?;
    Ok((bank, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MlpI1,
    MlpI2,
    Knn,
    Dt,
    Pca,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::MlpI1, Method::MlpI2, Method::Pca, Method::Dt, Method::Knn];

    pub fn token(self) -> &'static str {
        match self {
            Method::MlpI1 => "mlp_i1",
            Method::MlpI2 => "mlp_i2",
            Method::Knn => "knn",
            Method::Dt => "dt",
            Method::Pca => "pca",
        }
    }

    fn inputs(self) -> &'static str {
        match self {
            Method::MlpI1 => "residuals",
            Method::MlpI2 => "residuals interleaved with current moments",
            Method::Knn => "load current, soc",
            Method::Dt => "load current, soc, residuals",
            Method::Pca => "current moments",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.token() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected mlp_i1, mlp_i2, knn, dt or pca)")))
    }
}

/// Every feature view of one labelled telemetry set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub task: Task,
    pub classes: Vec<FaultClass>,
    pub labels: Vec<usize>,
    pub i1: Vec<Vec<f64>>,
    /// system task only below this line
    pub i2: Vec<Vec<f64>>,
    pub moments: Vec<Vec<f64>>,
    pub load_soc: Vec<Vec<f64>>,
    pub load_soc_residuals: Vec<Vec<f64>>,
}

pub fn build_feature_set(bank: &ModelBank, runs: &[(FaultClass, Vec<SystemSample>)], moment_reset: usize) -> Result<FeatureSet> {
    let task = bank.task;
    let mut fs = FeatureSet {
        task,
        classes: task.classes().to_vec(),
        labels: Vec::new(),
        i1: Vec::new(),
        i2: Vec::new(),
        moments: Vec::new(),
        load_soc: Vec::new(),
        load_soc_residuals: Vec::new(),
    };
    for (c, run) in runs {
        let label = task
            .index_of(*c)
            .ok_or_else(|| Error::Config(format!("class `{c}` is not part of task {}", task.token())))?;
        let i1 = modelbank::run_features(bank, run, FeatureKind::I1, moment_reset)?;
        if task == Task::System5class {
            let i2 = modelbank::run_features(bank, run, FeatureKind::I2, moment_reset)?;
            for ((s, r), f) in run.iter().zip(&i1).zip(&i2) {
                let base = [s.load_current, s.battery.soc];
                fs.moments.push(f.iter().skip(1).step_by(2).copied().collect());
                fs.load_soc.push(base.to_vec());
                fs.load_soc_residuals.push(base.iter().chain(r).copied().collect());
            }
            fs.i2.extend(i2);
        }
        fs.labels.extend(std::iter::repeat_n(label, run.len()));
        fs.i1.extend(i1);
    }
    Ok(fs)
}

impl FeatureSet {
    pub fn dataset(&self, method: Method) -> Result<LabeledDataset> {
        let x = match method {
            Method::MlpI1 => &self.i1,
            _ if self.task != Task::System5class => {
                return Err(Error::Config(format!("method `{method}` needs the system task")));
            }
            Method::MlpI2 => &self.i2,
            Method::Knn => &self.load_soc,
            Method::Dt => &self.load_soc_residuals,
            Method::Pca => &self.moments,
        };
        LabeledDataset::new(x.clone(), self.labels.clone(), self.classes.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: FaultClass,
    pub accuracy: Option<f64>,
    pub error: Option<f64>,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub resubstitution_loss: f64,
    pub kfold_loss: Option<f64>,
    pub folds: Option<usize>,
}

impl From<LossReport> for Losses {
    fn from(l: LossReport) -> Self {
        Losses {
            resubstitution_loss: l.resubstitution_loss,
            kfold_loss: Some(l.kfold_loss),
            folds: Some(l.folds),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub k: usize,
    pub resubstitution_loss: f64,
    pub kfold_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub class: FaultClass,
    pub center: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodDetails {
    Mlp {
        hidden: usize,
        epochs: usize,
        final_mse: f64,
        stop: StopReason,
    },
    Knn {
        k: usize,
        standardized: bool,
        loss_curve: Vec<LossPoint>,
    },
    Dt {
        max_depth: usize,
        min_leaf: usize,
        depth: usize,
        leaves: usize,
    },
    Pca {
        standardized: bool,
        centered: bool,
        eigenvalues: Vec<f64>,
        explained_ratio: Vec<f64>,
        first_direction: Vec<f64>,
        intervals: Vec<IntervalReport>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub inputs: String,
    pub feature_dim: usize,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub overall_accuracy: f64,
    pub per_class: Vec<ClassScore>,
    pub confusion: ConfusionMatrix,
    pub losses: Losses,
    pub details: MethodDetails,
}

impl MethodReport {
    pub fn class_accuracy(&self, c: FaultClass) -> Option<f64> {
        self.per_class.iter().find(|s| s.class == c).and_then(|s| s.accuracy)
    }
}

fn error_rate(truth: &[usize], pred: &[usize]) -> f64 {
    truth.iter().zip(pred).filter(|(a, b)| a != b).count() as f64 / truth.len().max(1) as f64
}

fn pca_kfold(train: &LabeledDataset, cfg: &RunConfig) -> Result<f64> {
    let c = &cfg.classify;
    let fold = classify::stratified_folds(&train.labels, train.n_classes(), c.folds, cfg.seed)?;
    let mut sum = 0.0;
    for f in 0..c.folds {
        let tr: Vec<usize> = (0..train.len()).filter(|&i| fold[i] != f).collect();
        let te: Vec<usize> = (0..train.len()).filter(|&i| fold[i] == f).collect();
        let m = PcaClassifier::fit(&train.subset(&tr), c.standardize, c.pca_center)?;
        let test = train.subset(&te);
        sum += error_rate(&test.labels, &m.predict(&test.features)?);
    }
    Ok(sum / c.folds as f64)
}

/// Fit one method on the stratified training split and score it on the
/// held-out part.
pub fn evaluate_method(fs: &FeatureSet, method: Method, cfg: &RunConfig) -> Result<MethodReport> {
    let ds = fs.dataset(method)?;
    let c = &cfg.classify;
    let (tr_idx, va_idx) = classify::split_indices(&ds, c.train_frac, cfg.seed)?;
    let (train, valid) = (ds.subset(&tr_idx), ds.subset(&va_idx));

    let (pred, resub_pred, kfold, details): (Vec<usize>, Vec<usize>, Option<LossReport>, MethodDetails) = match method {
        Method::MlpI1 | Method::MlpI2 => {
            let (m, rep) = MlpClassifier::train(&train, c.mlp_hidden, &c.mlp.to_train_config(cfg.seed))?;
            let d = MethodDetails::Mlp {
                hidden: c.mlp_hidden,
                epochs: rep.epochs,
                final_mse: rep.final_mse,
                stop: rep.stop,
            };
            (m.predict(&valid.features)?, m.predict(&train.features)?, None, d)
        }
        Method::Knn => {
            let ks: Vec<usize> = (1..=c.k_max).collect();
            let curve = knn_loss_curve(&train, &ks, c.folds, cfg.seed, c.standardize)?;
            let at_k = curve.iter().find(|(k, _)| *k == c.k).map(|(_, l)| *l);
            let m = knn_fit(&train, c.k, c.standardize)?;
            let d = MethodDetails::Knn {
                k: c.k,
                standardized: c.standardize,
                loss_curve: curve
                    .iter()
                    .map(|(k, l)| LossPoint {
                        k: *k,
                        resubstitution_loss: l.resubstitution_loss,
                        kfold_loss: l.kfold_loss,
                    })
                    .collect(),
            };
            (m.predict(&valid.features)?, m.predict(&train.features)?, at_k, d)
        }
        Method::Dt => {
            let tree = id3_fit(&train, c.max_depth, c.min_leaf)?;
            let l = dt_losses(&train, c.max_depth, c.min_leaf, c.folds, cfg.seed)?;
            let d = MethodDetails::Dt {
                max_depth: c.max_depth,
                min_leaf: c.min_leaf,
                depth: tree.depth(),
                leaves: tree.leaves(),
            };
            (tree.predict(&valid.features)?, tree.predict(&train.features)?, Some(l), d)
        }
        Method::Pca => {
            let m = PcaClassifier::fit(&train, c.standardize, c.pca_center)?;
            let resub = m.predict(&train.features)?;
            let l = LossReport {
                resubstitution_loss: error_rate(&train.labels, &resub),
                kfold_loss: pca_kfold(&train, cfg)?,
                folds: c.folds,
            };
            let total: f64 = m.model.eigenvalues.iter().sum();
            let d = MethodDetails::Pca {
                standardized: c.standardize,
                centered: c.pca_center,
                eigenvalues: m.model.eigenvalues.clone(),
                explained_ratio: m
                    .model
                    .eigenvalues
                    .iter()
                    .map(|v| if total > 0.0 { v / total } else { 0.0 })
                    .collect(),
                first_direction: m.model.column(0),
                intervals: m
                    .intervals
                    .iter()
                    .zip(&fs.classes)
                    .filter_map(|(iv, &class)| {
                        iv.map(|iv| IntervalReport {
                            class,
                            center: iv.center,
                            sigma: iv.sigma,
                            lo: iv.lo,
                            hi: iv.hi,
                        })
                    })
                    .collect(),
            };
            (m.predict(&valid.features)?, resub, Some(l), d)
        }
    };

    let cm = confusion(&valid.labels, &pred, &fs.classes)?;
    let rows = cm.row_sums();
    let per_class = cm
        .per_class_accuracy()
        .into_iter()
        .zip(&fs.classes)
        .zip(rows)
        .map(|((a, &class), samples)| ClassScore {
            class,
            accuracy: a,
            error: a.map(|a| 1.0 - a),
            samples,
        })
        .collect();
    let losses = match kfold {
        Some(l) => l.into(),
        None => Losses {
            resubstitution_loss: error_rate(&train.labels, &resub_pred),
            kfold_loss: None,
            folds: None,
        },
    };
    log::info!("{method}: validation accuracy {:.4}", cm.overall_accuracy());
    Ok(MethodReport {
        method,
        inputs: method.inputs().into(),
        feature_dim: ds.dim(),
        train_samples: train.len(),
        validation_samples: valid.len(),
        overall_accuracy: cm.overall_accuracy(),
        per_class,
        confusion: cm,
        losses,
        details,
    })
}

pub fn loss_curve_csv(points: &[LossPoint]) -> String {
    let mut s = String::from("k,resubstitution_loss,kfold_loss\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.k, p.resubstitution_loss, p.kfold_loss));
    }
    s
}

fn load_inputs(cfg: &RunConfig, bank_dir: &Path, data_dir: &Path) -> Result<(ModelBank, FeatureSet)> {
    let bank = ModelBank::load(bank_dir)?;
    let task = data_task(data_dir)?;
    if task != bank.task {
        return Err(Error::Config(format!(
            "bank task {} does not match data task {}",
            bank.task.token(),
            task.token()
        )));
    }
    let runs = load_runs(data_dir, task)?;
    let fs = build_feature_set(&bank, &runs, cfg.classify.moment_reset)?;
    Ok((bank, fs))
}

fn write_method_files(out: &mut Out, r: &MethodReport, cfg: &RunConfig) -> Result<()> {
    out.text(&format!("confusion_{}.csv", r.method), &r.confusion.to_csv())?;
    if let MethodDetails::Knn { loss_curve, .. } = &r.details {
        out.text("knn_loss_curve.csv", &loss_curve_csv(loss_curve))?;
        if cfg.report.svg {
            let x: Vec<f64> = loss_curve.iter().map(|p| p.k as f64).collect();
            let series = vec![
                ("resubstitution".to_string(), loss_curve.iter().map(|p| p.resubstitution_loss).collect()),
                ("k-fold".to_string(), loss_curve.iter().map(|p| p.kfold_loss).collect()),
            ];
            out.text("knn_loss_curve.svg", &io::line_chart_svg("KNN loss vs k", &x, &series))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEvalReport {
    pub task: Task,
    pub seed: u64,
    pub config_hash: String,
    #[serde(flatten)]
    pub result: MethodReport,
}

pub fn cmd_train_eval(
    cfg: &RunConfig,
    bank_dir: &Path,
    data_dir: &Path,
    method: Method,
    out_dir: &Path,
    opts: RunOptions,
) -> Result<TrainEvalReport> {
    cfg.validate()?;
    let (bank, fs) = load_inputs(cfg, bank_dir, data_dir)?;
    let ds = fs.dataset(method)?;
    let result = evaluate_method(&fs, method, cfg)?;
    let mut out = Out::new(out_dir, "train-eval", cfg, bank.task, &[bank_dir, data_dir], opts)?;
    let report = TrainEvalReport {
        task: bank.task,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        result,
    };
    out.json(&format!("report_{method}.json"), &report)?;
    write_method_files(&mut out, &report.result, cfg)?;
    if cfg.report.write_features {
        let labels: Vec<FaultClass> = ds.labels.iter().map(|&l| fs.classes[l]).collect();
        out.text(&format!("features_{method}.csv"), &io::features_csv(method.token(), &ds.features, &labels)?)?;
    }
    out.finish()?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub method: Method,
    pub overall_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub method: Method,
    pub per_class_error: Vec<ClassScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAugmentation {
    pub mlp_i1: f64,
    pub mlp_i2: f64,
    pub gain_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ordering {
    pub mlp_i2_ge_dt: bool,
    pub pca_ge_dt: bool,
    pub dt_gt_knn: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryGroundCheck {
    pub method: Method,
    pub battery_ground_accuracy: Option<f64>,
    pub overall_accuracy: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub tool: String,
    pub version: String,
    pub task: Task,
    pub seed: u64,
    pub config_hash: String,
    /// overall validation accuracy, one row per classifier
    pub table5: Vec<AccuracyRow>,
    /// per-class validation error
    pub table6: Vec<ErrorRow>,
    pub feature_augmentation: Option<FeatureAugmentation>,
    pub ordering: Option<Ordering>,
    pub battery_ground: Vec<BatteryGroundCheck>,
    pub methods: Vec<MethodReport>,
    pub config: RunConfig,
}

impl CompareReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Runs every classifier available for the task on one split and assembles
/// the comparison tables.
pub fn compare_methods(fs: &FeatureSet, cfg: &RunConfig) -> Result<CompareReport> {
    let methods: Vec<Method> = match fs.task {
        Task::System5class => Method::ALL.to_vec(),
        Task::Pv3class => vec![Method::MlpI1],
    };
    let reports = methods
        .iter()
        .map(|&m| evaluate_method(fs, m, cfg))
        .collect::<Result<Vec<_>>>()?;
    let acc = |m: Method| reports.iter().find(|r| r.method == m).map(|r| r.overall_accuracy);

    let table5 = reports
        .iter()
        .filter(|r| fs.task == Task::Pv3class || r.method != Method::MlpI1)
        .map(|r| AccuracyRow {
            method: r.method,
            overall_accuracy: r.overall_accuracy,
        })
        .collect();
    let table6 = reports
        .iter()
        .map(|r| ErrorRow {
            method: r.method,
            per_class_error: r.per_class.clone(),
        })
        .collect();
    let (feature_augmentation, ordering) = match (acc(Method::MlpI1), acc(Method::MlpI2), acc(Method::Pca), acc(Method::Dt), acc(Method::Knn)) {
        (Some(a1), Some(a2), Some(pca), Some(dt), Some(knn)) => {
            let o = Ordering {
                mlp_i2_ge_dt: a2 >= dt,
                pca_ge_dt: pca >= dt,
                dt_gt_knn: dt > knn,
                holds: a2 >= dt && pca >= dt && dt > knn,
            };
            (
                Some(FeatureAugmentation {
                    mlp_i1: a1,
                    mlp_i2: a2,
                    gain_pp: 100.0 * (a2 - a1),
                }),
                Some(o),
            )
        }
        _ => (None, None),
    };
    let battery_ground = if fs.classes.contains(&FaultClass::BatteryGround) {
        reports
            .iter()
            .map(|r| {
                let bg = r.class_accuracy(FaultClass::BatteryGround);
                BatteryGroundCheck {
                    method: r.method,
                    battery_ground_accuracy: bg,
                    overall_accuracy: r.overall_accuracy,
                    holds: bg.is_some_and(|b| b >= r.overall_accuracy),
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(CompareReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        task: fs.task,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        table5,
        table6,
        feature_augmentation,
        ordering,
        battery_ground,
        methods: reports,
        config: cfg.clone(),
    })
}

pub fn accuracy_csv(r: &CompareReport) -> String {
    let classes: Vec<FaultClass> = r.task.classes().to_vec();
    let mut s = String::from("method,overall_accuracy");
    for c in &classes {
        s.push(',');
        s.push_str(c.token());
    }
    s.push('\n');
    for m in &r.methods {
        s.push_str(&format!("{},{}", m.method, m.overall_accuracy));
        for c in &classes {
            s.push(',');
            if let Some(a) = m.class_accuracy(*c) {
                s.push_str(&a.to_string());
            }
        }
        s.push('\n');
    }
    s
}

pub fn cmd_compare(cfg: &RunConfig, bank_dir: &Path, data_dir: &Path, out_dir: &Path, opts: RunOptions) -> Result<CompareReport> {
    cfg.validate()?;
    let (bank, fs) = load_inputs(cfg, bank_dir, data_dir)?;
    let report = compare_methods(&fs, cfg)?;
    let mut out = Out::new(out_dir, "compare", cfg, bank.task, &[bank_dir, data_dir], opts)?;
    out.json("compare.json", &report)?;
    out.text("accuracy.csv", &accuracy_csv(&report))?;
    for m in &report.methods {
        write_method_files(&mut out, m, cfg)?;
    }
    if cfg.report.svg {
        let bars: Vec<(String, f64)> = report
            .methods
            .iter()
            .map(|m| (m.method.token().to_string(), m.overall_accuracy))
            .collect();
        out.text("accuracy.svg", &io::bar_chart_svg("Validation accuracy by method", &bars))?;
    }
    out.finish()?;
    Ok(report)
}
