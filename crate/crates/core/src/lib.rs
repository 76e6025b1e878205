//! Satellite electrical power system (EPS) fault diagnosis.
//!
//! A simulated EPS produces telemetry for healthy and faulty operation. A
//! bank of small neural regressors, one per class, predicts the load
//! current from irradiance and temperature; residuals and running current
//! moments against that bank feed four classifiers (MLP, KNN, ID3 tree,
//! PCA intervals).

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod config;
pub mod envsim;
pub mod error;
pub mod faults;
pub mod io;
pub mod linalg;
pub mod mlpkit;
pub mod modelbank;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
