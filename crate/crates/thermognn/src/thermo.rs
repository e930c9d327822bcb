//! The weight thermometer: per-epoch parameter snapshots, velocities,
//! instantaneous and thermodynamic temperature per layer, per-weight
//! mean-squared-velocity maps, and the noise-scale reference eta/(2*batch).
//!
//! Velocity of a parameter is its displacement between consecutive
//! snapshots (unit time step). Instantaneous temperature of a layer is the
//! kinetic energy of those displacements (unit masses) divided by k_B
//! times the layer's degree-of-freedom count. Thermodynamic temperature is
//! the time average over the measurement window.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::ParamSet;
use serde::{Deserialize, Serialize};

/// Immutable copy of all trainable tensors at an epoch boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: usize,
    pub tensors: ParamSet,
}

/// Append-only snapshot log; epochs strictly increasing.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SnapshotLog {
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotLog {
    pub fn new() -> Self {
        SnapshotLog { snapshots: Vec::new() }
    }

    pub fn push(&mut self, epoch: usize, params: &ParamSet) {
        if let Some(last) = self.snapshots.last() {
            assert!(epoch > last.epoch, "snapshot epochs must increase");
        }
        self.snapshots.push(Snapshot {
            epoch,
            tensors: params.clone(),
        });
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.snapshots
            .first()
            .map(|s| s.tensors.layers.iter().map(|l| l.name.clone()).collect())
            .unwrap_or_default()
    }
}

/// Per-parameter displacements between two consecutive snapshots.
#[derive(Debug, Clone)]
pub struct VelocityRecord {
    pub epoch: usize,
    pub deltas: ParamSet,
}

/// v_k = w_k(t) - w_k(t-1); requires cur.epoch = prev.epoch + 1.
pub fn velocities(prev: &Snapshot, cur: &Snapshot) -> Result<VelocityRecord> {
    if cur.epoch != prev.epoch + 1 {
        return Err(Error::data(format!(
            "velocity undefined across epoch gap {} -> {}",
            prev.epoch, cur.epoch
        )));
    }
    let mut deltas = cur.tensors.clone();
    deltas.zip_mut(&prev.tensors, |c, p| {
        for (cv, pv) in c.as_mut_slice().iter_mut().zip(p.as_slice()) {
            *cv -= pv;
        }
    });
    Ok(VelocityRecord {
        epoch: cur.epoch,
        deltas,
    })
}

/// Which parameters count toward a layer's degrees of freedom.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TemperatureConfig {
    pub k_b: f64,
    /// Count bias tensors in d and the kinetic sum (default true).
    pub include_biases: bool,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        TemperatureConfig {
            k_b: 1.0,
            include_biases: true,
        }
    }
}

fn tensor_included(name: &str, cfg: &TemperatureConfig) -> bool {
    cfg.include_biases || name != "bias"
}

/// Degrees of freedom counted for one layer under `cfg`.
pub fn layer_dof(params: &ParamSet, layer: &str, cfg: &TemperatureConfig) -> Result<usize> {
    let lp = params
        .layer(layer)
        .ok_or_else(|| Error::config(format!("unknown layer {layer}")))?;
    Ok(lp
        .tensors
        .iter()
        .filter(|(n, _)| tensor_included(n, cfg))
        .map(|(_, m)| m.len())
        .sum())
}

/// Kinetic energy over the layer's counted parameters divided by k_B * d.
pub fn instantaneous_temperature(
    v: &VelocityRecord,
    layer: &str,
    cfg: &TemperatureConfig,
) -> Result<f64> {
    let lp = v
        .deltas
        .layer(layer)
        .ok_or_else(|| Error::config(format!("unknown layer {layer}")))?;
    let mut kinetic = 0.0;
    let mut dof = 0usize;
    for (name, m) in &lp.tensors {
        if !tensor_included(name, cfg) {
            continue;
        }
        kinetic += 0.5 * m.sum_sq();
        dof += m.len();
    }
    if dof == 0 {
        return Err(Error::config(format!("layer {layer} has no counted parameters")));
    }
    Ok(kinetic / (cfg.k_b * dof as f64))
}

/// Arithmetic mean of the instantaneous temperatures over the window.
pub fn thermodynamic_temperature(series: &[f64]) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::config("empty measurement window"));
    }
    Ok(series.iter().sum::<f64>() / series.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemperatureSeries {
    pub layer_name: String,
    /// (epoch, instantaneous temperature) per velocity step.
    pub instantaneous: Vec<(usize, f64)>,
    /// Time average over the window.
    pub thermodynamic: f64,
    pub dof: usize,
    pub k_b: f64,
}

/// One temperature series per named layer, from a consecutive snapshot log.
pub fn layer_temperatures(log: &SnapshotLog, cfg: &TemperatureConfig) -> Result<Vec<TemperatureSeries>> {
    if log.len() < 2 {
        return Err(Error::config("need at least 2 snapshots"));
    }
    let names = log.layer_names();
    let mut per_layer: Vec<Vec<(usize, f64)>> = vec![Vec::new(); names.len()];
    for pair in log.snapshots.windows(2) {
        let v = velocities(&pair[0], &pair[1])?;
        for (i, name) in names.iter().enumerate() {
            per_layer[i].push((v.epoch, instantaneous_temperature(&v, name, cfg)?));
        }
    }
    names
        .iter()
        .zip(per_layer)
        .map(|(name, inst)| {
            let vals: Vec<f64> = inst.iter().map(|&(_, t)| t).collect();
            Ok(TemperatureSeries {
                layer_name: name.clone(),
                thermodynamic: thermodynamic_temperature(&vals)?,
                instantaneous: inst,
                dof: layer_dof(&log.snapshots[0].tensors, name, cfg)?,
                k_b: cfg.k_b,
            })
        })
        .collect()
}

/// Aggregation axis for [`MsvMap::row_means`]: the output dimension of the
/// weight matrix (columns of the stored in x out matrix) or the input
/// dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsvAxis {
    OutputDim,
    InputDim,
}

/// Per-weight mean squared velocity over a window, for one layer's main
/// weight matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MsvMap {
    pub layer_name: String,
    /// Same shape as the layer's weight matrix (input x output).
    pub msv: Matrix,
    /// Aggregate per output index (or input index, by `axis`).
    pub row_means: Vec<f64>,
    pub axis: MsvAxis,
}

/// MSV(i,j) = mean over the window of v_ij(t)^2, on the "weight" tensor.
pub fn per_weight_msv(log: &SnapshotLog, layer: &str, axis: MsvAxis) -> Result<MsvMap> {
    if log.len() < 2 {
        return Err(Error::config("need a window of at least 2 snapshots"));
    }
    let first = log.snapshots[0]
        .tensors
        .layer(layer)
        .ok_or_else(|| Error::config(format!("unknown layer {layer}")))?;
    let w0 = first
        .tensor("weight")
        .ok_or_else(|| Error::config(format!("layer {layer} has no weight tensor")))?;
    let mut acc = Matrix::zeros(w0.rows(), w0.cols());
    let mut steps = 0usize;
    for pair in log.snapshots.windows(2) {
        let v = velocities(&pair[0], &pair[1])?;
        let dv = v.deltas.layer(layer).unwrap().tensor("weight").unwrap();
        for (a, d) in acc.as_mut_slice().iter_mut().zip(dv.as_slice()) {
            *a += d * d;
        }
        steps += 1;
    }
    let msv = acc.scale(1.0 / steps as f64);
    let row_means = match axis {
        MsvAxis::OutputDim => {
            let sums = msv.col_sums();
            sums.as_slice().iter().map(|s| s / msv.rows() as f64).collect()
        }
        MsvAxis::InputDim => (0..msv.rows())
            .map(|i| msv.row(i).iter().sum::<f64>() / msv.cols() as f64)
            .collect(),
    };
    Ok(MsvMap {
        layer_name: layer.to_string(),
        msv,
        row_means,
        axis,
    })
}

/// The literature's noise-scale temperature eta/(2*batch_size), kept as a
/// comparison column next to measured T.
pub fn cs_temperature(eta: f64, batch_size: usize) -> f64 {
    assert!(eta > 0.0 && batch_size >= 1);
    eta / (2.0 * batch_size as f64)
}
