//! Run configuration (TOML). Every key is optional; unknown keys are errors.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envsim::{EnvParams, FaultParams, PlantParams};
use crate::error::{Error, Result};
use crate::faults::{self, RateBand, Task};
use crate::mlpkit::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub task: Task,
    pub sample_count: usize,
    pub timestep_s: f64,
    pub noise_sigma_frac: f64,
    pub soc_noise_frac: f64,
    pub plant: PlantParams,
    pub env: EnvParams,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            task: Task::System5class,
            sample_count: 2001,
            timestep_s: 30.0,
            noise_sigma_frac: 0.005,
            soc_noise_frac: 0.01,
            plant: PlantParams::default(),
            env: EnvParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultsSection {
    #[serde(flatten)]
    pub params: FaultParams,
    /// horizon for the reliability schedule written by gen-data
    pub schedule_horizon_h: f64,
}

impl Default for FaultsSection {
    fn default() -> Self {
        FaultsSection {
            params: FaultParams::default(),
            schedule_horizon_h: 1.0e7,
        }
    }
}

/// LM settings shared by the regression bank and the MLP classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSection {
    pub mu_init: f64,
    pub mu_inc: f64,
    pub mu_dec: f64,
    pub max_mu: f64,
    pub max_epochs: usize,
    pub goal_mse: f64,
}

impl Default for LmSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        LmSection {
            mu_init: t.mu_init,
            mu_inc: t.mu_inc,
            mu_dec: t.mu_dec,
            max_mu: t.max_mu,
            max_epochs: t.max_epochs,
            goal_mse: t.goal_mse,
        }
    }
}

impl LmSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            mu_init: self.mu_init,
            mu_inc: self.mu_inc,
            mu_dec: self.mu_dec,
            max_mu: self.max_mu,
            max_epochs: self.max_epochs,
            goal_mse: self.goal_mse,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub hidden: usize,
    pub train_frac: f64,
    pub lm: LmSection,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            hidden: 10,
            train_frac: 0.7,
            lm: LmSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub train_frac: f64,
    pub folds: usize,
    pub k: usize,
    pub k_max: usize,
    pub standardize: bool,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub pca_center: bool,
    /// restart the current moments every n samples; 0 = cumulative
    pub moment_reset: usize,
    pub mlp_hidden: usize,
    pub mlp: LmSection,
}

impl Default for ClassifySection {
    fn default() -> Self {
        ClassifySection {
            train_frac: 0.7,
            folds: 10,
            k: 3,
            k_max: 15,
            standardize: true,
            max_depth: 10,
            min_leaf: 20,
            pca_center: true,
            moment_reset: 0,
            mlp_hidden: 15,
            mlp: LmSection {
                max_epochs: 150,
                goal_mse: 1e-6,
                ..LmSection::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub svg: bool,
    pub write_features: bool,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            svg: true,
            write_features: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub simulate: SimulateSection,
    pub faults: FaultsSection,
    /// overrides merged over the built-in rate table
    pub rates: BTreeMap<String, RateBand>,
    pub train: TrainSection,
    pub classify: ClassifySection,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            simulate: SimulateSection::default(),
            faults: FaultsSection::default(),
            rates: BTreeMap::new(),
            train: TrainSection::default(),
            classify: ClassifySection::default(),
            report: ReportSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.simulate;
        if s.sample_count < 100 {
            return Err(Error::Config("simulate.sample_count must be at least 100".into()));
        }
        if !(s.timestep_s > 0.0) {
            return Err(Error::Config("simulate.timestep_s must be positive".into()));
        }
        if !(s.noise_sigma_frac >= 0.0) || !(s.soc_noise_frac >= 0.0) {
            return Err(Error::Config("simulate noise fractions must be nonnegative".into()));
        }
        s.plant.validate()?;
        self.faults.params.validate()?;
        if !(self.faults.schedule_horizon_h > 0.0) {
            return Err(Error::Config("faults.schedule_horizon_h must be positive".into()));
        }
        for (k, b) in &self.rates {
            if !(b.min >= 0.0 && b.max >= b.min) {
                return Err(Error::Config(format!("rates.{k}: need 0 <= min <= max")));
            }
        }
        self.train.lm.to_train_config(0).validate()?;
        if self.train.hidden == 0 || !(self.train.train_frac > 0.0 && self.train.train_frac < 1.0) {
            return Err(Error::Config("train.hidden must be positive and train.train_frac in (0, 1)".into()));
        }
        let c = &self.classify;
        c.mlp.to_train_config(0).validate()?;
        if !(c.train_frac > 0.0 && c.train_frac < 1.0) {
            return Err(Error::Config("classify.train_frac must lie in (0, 1)".into()));
        }
        if c.folds < 2 {
            return Err(Error::Config("classify.folds must be at least 2".into()));
        }
        if c.k == 0 || c.k > c.k_max {
            return Err(Error::Config("classify.k must satisfy 1 <= k <= k_max".into()));
        }
        if c.min_leaf == 0 || c.mlp_hidden == 0 {
            return Err(Error::Config("classify.min_leaf and classify.mlp_hidden must be positive".into()));
        }
        Ok(())
    }

    pub fn rates(&self) -> BTreeMap<String, RateBand> {
        let mut r = faults::default_rates();
        r.extend(self.rates.clone());
        r
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved configuration, hex.
    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.to_toml().as_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }
}
