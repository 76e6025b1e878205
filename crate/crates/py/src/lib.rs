//! Python bindings for the epsdiag toolkit.

#[pyo3::pymodule]
mod epsdiag_py {
    use std::collections::BTreeMap;
    use std::path::PathBuf;

    use epsdiag::classify::{self, LabeledDataset};
    use epsdiag::config::RunConfig;
    use epsdiag::envsim::{self, ScenarioConfig};
    use epsdiag::faults::{self, FaultClass, Task};
    use epsdiag::mlpkit::{self, MlpNetwork, TrainConfig};
    use epsdiag::pipeline::{self, RunOptions};
    use epsdiag::{io, Error};
    use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
    use pyo3::prelude::*;

    fn err(e: Error) -> PyErr {
        match e {
            Error::Io { .. } | Error::Format { .. } => PyOSError::new_err(e.to_string()),
            Error::Config(_) | Error::Domain(_) | Error::Shape { .. } => PyValueError::new_err(e.to_string()),
            _ => PyRuntimeError::new_err(e.to_string()),
        }
    }

    fn parse_fault(token: &str) -> PyResult<FaultClass> {
        token.parse().map_err(err)
    }

    #[pymodule_init]
    fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
        m.add("__version__", pipeline::VERSION)
    }

    /// Fault class tokens in canonical order.
    #[pyfunction]
    fn fault_tokens() -> Vec<&'static str> {
        FaultClass::ALL.iter().map(|c| c.token()).collect()
    }

    /// Class tokens of a task ("system_5class" or "pv_3class").
    #[pyfunction]
    fn task_classes(task: &str) -> PyResult<Vec<&'static str>> {
        let t: Task = task.parse().map_err(err)?;
        Ok(t.classes().iter().map(|c| c.token()).collect())
    }

    /// Failure rate in h⁻¹ from test hours and failure counts.
    #[pyfunction]
    fn fault_rate(test_hours: f64, n_failed: u64, n_total: u64) -> PyResult<f64> {
        faults::fault_rate(test_hours, n_failed, n_total).map_err(err)
    }

    /// Component rate table: name -> (min, max) in h⁻¹.
    #[pyfunction]
    fn default_rates() -> BTreeMap<String, (f64, f64)> {
        faults::default_rates().into_iter().map(|(k, b)| (k, (b.min, b.max))).collect()
    }

    /// Simulated telemetry as columns keyed by channel name.
    #[pyfunction]
    #[pyo3(signature = (fault, sample_count = 2001, seed = 1, noisy = true))]
    fn simulate(fault: &str, sample_count: usize, seed: u64, noisy: bool) -> PyResult<BTreeMap<&'static str, Vec<f64>>> {
        let mut cfg = ScenarioConfig::new(parse_fault(fault)?, sample_count, seed);
        if !noisy {
            cfg = cfg.noiseless();
        }
        let run = envsim::simulate(&cfg).map_err(err)?;
        let col = |f: fn(&envsim::SystemSample) -> f64| run.samples.iter().map(f).collect::<Vec<f64>>();
        Ok(BTreeMap::from([
            ("time_s", col(|s| s.time_s)),
            ("irr_w_m2", col(|s| s.env.irradiance)),
            ("temp_c", col(|s| s.env.temperature)),
            ("pv_v", col(|s| s.pv.voltage)),
            ("pv_i", col(|s| s.pv.current)),
            ("bus_v", col(|s| s.bus_voltage)),
            ("load_i_a", col(|s| s.load_current)),
            ("soc", col(|s| s.battery.soc)),
            ("cell_v", col(|s| s.battery.cell_voltage)),
        ]))
    }

    /// Single-hidden-layer tanh network trained with Levenberg-Marquardt.
    #[pyclass(name = "Mlp")]
    struct Mlp {
        net: MlpNetwork,
    }

    #[pymethods]
    impl Mlp {
        #[new]
        #[pyo3(signature = (n_in, n_hidden, n_out, seed = 0))]
        fn new(n_in: usize, n_hidden: usize, n_out: usize, seed: u64) -> Self {
            Mlp {
                net: MlpNetwork::init(n_in, n_hidden, n_out, seed),
            }
        }

        #[staticmethod]
        fn from_text(text: &str) -> PyResult<Self> {
            let net = MlpNetwork::from_text(text, &PathBuf::from("<string>")).map_err(err)?;
            Ok(Mlp { net })
        }

        fn to_text(&self) -> String {
            self.net.to_text()
        }

        #[getter]
        fn params(&self) -> Vec<f64> {
            self.net.params().to_vec()
        }

        #[getter]
        fn layer_sizes(&self) -> (usize, usize, usize) {
            let [a, b, c] = self.net.layer_sizes();
            (a, b, c)
        }

        fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
            self.net.forward(&x).map_err(err)
        }

        fn predict(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
            self.net.predict(&xs).map_err(err)
        }

        fn jacobian(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
            mlpkit::jacobian(&self.net, &xs).map_err(err)
        }

        /// Trains in place; returns the MSE history and stop reason.
        #[pyo3(signature = (xs, ys, max_epochs = 1000, goal_mse = 0.0, seed = 0))]
        fn train(&mut self, xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>, max_epochs: usize, goal_mse: f64, seed: u64) -> PyResult<(Vec<f64>, String)> {
            let cfg = TrainConfig {
                max_epochs,
                goal_mse,
                seed,
                ..TrainConfig::default()
            };
            let (net, rep) = mlpkit::lm_train(&self.net, &xs, &ys, &cfg).map_err(err)?;
            self.net = net;
            Ok((rep.mse_history, format!("{:?}", rep.stop)))
        }

        fn __repr__(&self) -> String {
            let [a, b, c] = self.net.layer_sizes();
            format!("Mlp({a}, {b}, {c})")
        }
    }

    fn dataset(x: Vec<Vec<f64>>, y: Vec<usize>) -> PyResult<LabeledDataset> {
        let n = y.iter().max().map_or(0, |m| m + 1);
        if n > FaultClass::ALL.len() {
            return Err(PyValueError::new_err("at most 7 classes are supported"));
        }
        LabeledDataset::new(x, y, FaultClass::ALL[..n].to_vec()).map_err(err)
    }

    /// Labels predicted by k-nearest neighbours.
    #[pyfunction]
    #[pyo3(signature = (train_x, train_y, queries, k = 3, standardize = true))]
    fn knn_predict(train_x: Vec<Vec<f64>>, train_y: Vec<usize>, queries: Vec<Vec<f64>>, k: usize, standardize: bool) -> PyResult<Vec<usize>> {
        let m = classify::knn_fit(&dataset(train_x, train_y)?, k, standardize).map_err(err)?;
        m.predict(&queries).map_err(err)
    }

    /// Labels predicted by an ID3 tree.
    #[pyfunction]
    #[pyo3(signature = (train_x, train_y, queries, max_depth = 10, min_leaf = 20))]
    fn dt_predict(train_x: Vec<Vec<f64>>, train_y: Vec<usize>, queries: Vec<Vec<f64>>, max_depth: usize, min_leaf: usize) -> PyResult<Vec<usize>> {
        let t = classify::id3_fit(&dataset(train_x, train_y)?, max_depth, min_leaf).map_err(err)?;
        t.predict(&queries).map_err(err)
    }

    type PcaResult = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

    /// (eigenvalues, principal directions as rows, mean).
    #[pyfunction]
    #[pyo3(signature = (features, center = true))]
    fn pca(features: Vec<Vec<f64>>, center: bool) -> PyResult<PcaResult> {
        let m = classify::pca_fit(&features, center).map_err(err)?;
        let dirs = (0..m.dim).map(|j| m.column(j)).collect();
        Ok((m.eigenvalues, dirs, m.mean))
    }

    /// Confusion counts, rows = true class.
    #[pyfunction]
    fn confusion(truth: Vec<usize>, predicted: Vec<usize>, n_classes: usize) -> PyResult<Vec<Vec<u64>>> {
        if n_classes > FaultClass::ALL.len() {
            return Err(PyValueError::new_err("at most 7 classes are supported"));
        }
        Ok(classify::confusion(&truth, &predicted, &FaultClass::ALL[..n_classes]).map_err(err)?.counts)
    }

    /// gen-data, fit-bank and compare under `out_dir`; returns compare.json text.
    #[pyfunction]
    #[pyo3(signature = (out_dir, seed = 1, config_toml = None))]
    fn run_pipeline(py: Python<'_>, out_dir: PathBuf, seed: u64, config_toml: Option<&str>) -> PyResult<String> {
        let mut cfg = match config_toml {
            Some(t) => RunConfig::from_toml_str(t).map_err(err)?,
            None => RunConfig::default(),
        };
        cfg.seed = seed;
        let opts = RunOptions { no_timestamp: true };
        py.detach(|| {
            let (data, bank, cmp) = (out_dir.join("data"), out_dir.join("bank"), out_dir.join("compare"));
            pipeline::cmd_gen_data(&cfg, &data, opts)?;
            pipeline::cmd_fit_bank(&cfg, &data, &bank, opts)?;
            pipeline::cmd_compare(&cfg, &bank, &data, &cmp, opts).map(|r| io::to_json(&r))
        })
        .map_err(err)
    }
}
