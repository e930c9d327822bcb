//! Graph-neural-network training engine instrumented as a thermodynamic
//! system: GCN and GAT classifiers trained from scratch with SGD/Adam,
//! with per-layer "temperature" measured as the mean kinetic energy of
//! per-epoch weight displacements. Includes equilibrium measurement
//! windows, learning-rate and batch-size sweeps, power-law and linear
//! fits of T against the hyperparameters, per-weight mean-squared-velocity
//! maps, and an exploratory row-pruning probe.
//!
//! See the runnable programs under `examples/` for each capability, and
//! the `thermognn` binary for the file-emitting CLI.

pub mod error;
pub mod experiment;
pub mod fit;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod report;
pub mod snaplog;
pub mod thermo;

pub use error::{Error, Result};
