//! Experiment protocol: train to equilibrium, run fixed-hyperparameter
//! measurement windows, sweep learning rate and batch size from one shared
//! equilibrium checkpoint, and the exploratory MSV-based row-pruning probe.

use crate::error::{Error, Result};
use crate::graph::{batch_graphs, make_batches, DatasetSplit, Graph};
use crate::linalg::RngStream;
use crate::model::{accuracy, init_params, loss_and_grads, model_forward, ModelSpec, ParamSet};
use crate::optim::{adam_step, sgd_step, AdamState, LrSchedule, OptimizerKind};
use crate::thermo::{
    cs_temperature, layer_temperatures, per_weight_msv, MsvAxis, MsvMap, SnapshotLog,
    TemperatureConfig, TemperatureSeries,
};
use serde::{Deserialize, Serialize};

/// Learning-rate grid spanning the studied range (endpoints fixed,
/// interior points chosen on a rough log grid).
pub const DEFAULT_ETA_GRID: [f64; 5] = [7e-4, 1e-3, 1.5e-3, 2e-3, 3e-3];
/// Batch-size grid endpoints 8 and 128.
pub const DEFAULT_BETA_GRID: [usize; 5] = [8, 16, 32, 64, 128];
/// Default fixed learning rate for the batch-size sweep (the post-decay
/// value of the 600-epoch schedule); override with --fixed-eta.
pub const DEFAULT_FIXED_ETA: f64 = 1e-5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub schedule: LrSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale preset: short schedule so the full pipeline runs in minutes.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            schedule: LrSchedule::new(1e-3, 0.1, 20).unwrap(),
            epochs: 60,
            batch_size: 32,
            seed,
        }
    }

    /// Full-scale preset: 600 epochs, base 1e-3, decay 1/10 every 200.
    pub fn paper_scale(seed: u64) -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            schedule: LrSchedule::new(1e-3, 0.1, 200).unwrap(),
            epochs: 600,
            batch_size: 32,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub eta: f64,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    pub params: ParamSet,
    pub log: Vec<EpochStat>,
    pub snapshots: SnapshotLog,
}

enum Optimizer {
    Sgd,
    Adam(AdamState),
}

impl Optimizer {
    fn new(kind: OptimizerKind, params: &ParamSet) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(params)),
        }
    }

    fn step(&mut self, params: &ParamSet, grads: &ParamSet, eta: f64) -> Result<ParamSet> {
        match self {
            Optimizer::Sgd => sgd_step(params, grads, eta),
            Optimizer::Adam(state) => {
                let (next, st) = adam_step(params, grads, state, eta)?;
                *state = st;
                Ok(next)
            }
        }
    }
}

/// Accuracy of the model over a graph list, evaluated in large batches.
pub fn evaluate_accuracy(spec: &ModelSpec, params: &ParamSet, graphs: &[Graph]) -> Result<f64> {
    if graphs.is_empty() {
        return Ok(0.0);
    }
    let mut correct_weighted = 0.0;
    for chunk in graphs.chunks(128) {
        let members: Vec<&Graph> = chunk.iter().collect();
        let batch = batch_graphs(&members);
        let (logits, _) = model_forward(spec, params, &batch)?;
        correct_weighted += accuracy(&logits, &batch.labels) * chunk.len() as f64;
    }
    Ok(correct_weighted / graphs.len() as f64)
}

fn run_epochs(
    spec: &ModelSpec,
    start: &ParamSet,
    data: &DatasetSplit,
    optimizer_kind: OptimizerKind,
    schedule: &LrSchedule,
    epochs: usize,
    batch_size: usize,
    stream: &mut RngStream,
    with_eval: bool,
) -> Result<TrainResult> {
    let mut params = start.clone();
    let mut optimizer = Optimizer::new(optimizer_kind, &params);
    let mut snapshots = SnapshotLog::new();
    snapshots.push(0, &params);
    let mut log = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let eta = schedule.eta(epoch - 1);
        let batches = make_batches(&data.train, batch_size, stream, true)?;
        let mut loss_sum = 0.0;
        for batch in &batches {
            let (loss, _, grads) = loss_and_grads(spec, &params, batch)?;
            if !loss.is_finite() {
                return Err(Error::numeric(format!("non-finite loss at epoch {epoch}")));
            }
            loss_sum += loss * batch.size as f64;
            params = optimizer.step(&params, &grads, eta)?;
        }
        snapshots.push(epoch, &params);
        let (train_acc, test_acc) = if with_eval {
            (
                evaluate_accuracy(spec, &params, &data.train)?,
                evaluate_accuracy(spec, &params, &data.test)?,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        log.push(EpochStat {
            epoch,
            eta,
            loss: loss_sum / data.train.len() as f64,
            train_acc,
            test_acc,
        });
    }
    Ok(TrainResult {
        params,
        log,
        snapshots,
    })
}

/// Train from a fresh initialization under the config's schedule.
/// Deterministic given the seed; snapshots taken at every epoch boundary.
pub fn train_to_equilibrium(
    spec: &ModelSpec,
    data: &DatasetSplit,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    spec.validate()?;
    let root = RngStream::new(cfg.seed);
    let mut init_stream = root.substream(0);
    let params = init_params(spec, &mut init_stream);
    let mut train_stream = root.substream(1);
    run_epochs(
        spec,
        &params,
        data,
        cfg.optimizer,
        &cfg.schedule,
        cfg.epochs,
        cfg.batch_size,
        &mut train_stream,
        true,
    )
}

/// Fixed-hyperparameter continued training used by windows and sweeps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub eta: f64,
    pub batch_size: usize,
    pub window_epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

/// Continue training from a copy of `params` at constant eta and batch
/// size; returns per-layer temperatures over the window and the window's
/// snapshot log. The input params are never mutated.
pub fn measure_window(
    spec: &ModelSpec,
    params: &ParamSet,
    data: &DatasetSplit,
    ms: &MeasureSpec,
    temp_cfg: &TemperatureConfig,
) -> Result<(Vec<TemperatureSeries>, SnapshotLog)> {
    if ms.window_epochs < 2 {
        return Err(Error::config("measurement window must span at least 2 epochs"));
    }
    let mut stream = RngStream::new(ms.seed).substream(2);
    let result = run_epochs(
        spec,
        params,
        data,
        ms.optimizer,
        &LrSchedule::constant(ms.eta),
        ms.window_epochs,
        ms.batch_size,
        &mut stream,
        false,
    )?;
    let series = layer_temperatures(&result.snapshots, temp_cfg)?;
    Ok((series, result.snapshots))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    Eta,
    BatchSize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub varied: SweepVar,
    /// Grid of eta values, or batch sizes (as integers) for BatchSize.
    pub values: Vec<f64>,
    pub fixed_eta: f64,
    pub fixed_beta: usize,
    pub window_epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub zeta: f64,
    pub layer: String,
    pub temperature: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub varied: SweepVar,
    pub rows: Vec<SweepRow>,
}

fn sweep_trial(
    spec: &ModelSpec,
    params: &ParamSet,
    data: &DatasetSplit,
    sw: &SweepSpec,
    value: f64,
    temp_cfg: &TemperatureConfig,
) -> Result<Vec<SweepRow>> {
    let (eta, beta) = match sw.varied {
        SweepVar::Eta => (value, sw.fixed_beta),
        SweepVar::BatchSize => (sw.fixed_eta, value as usize),
    };
    // trial seed depends on the value, not the launch order
    let trial_seed = RngStream::new(sw.seed).substream(value.to_bits()).next_u64();
    let ms = MeasureSpec {
        eta,
        batch_size: beta,
        window_epochs: sw.window_epochs,
        optimizer: sw.optimizer,
        seed: trial_seed,
    };
    let (series, _) = measure_window(spec, params, data, &ms, temp_cfg)?;
    let zeta = cs_temperature(eta, beta);
    Ok(series
        .into_iter()
        .map(|ts| SweepRow {
            value,
            zeta,
            layer: ts.layer_name,
            temperature: ts.thermodynamic,
        })
        .collect())
}

fn thread_cap() -> usize {
    std::env::var("THERMOGNN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
}

/// One measurement window per grid value, all starting from the same
/// equilibrium params. Rows sorted by (value, layer order); trials are
/// independent and may run in parallel (THERMOGNN_THREADS caps workers).
pub fn sweep(
    spec: &ModelSpec,
    equilibrium_params: &ParamSet,
    data: &DatasetSplit,
    sw: &SweepSpec,
    temp_cfg: &TemperatureConfig,
) -> Result<SweepResult> {
    if sw.values.len() < 3 {
        return Err(Error::config("sweep needs at least 3 values"));
    }
    let mut values = sw.values.clone();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();

    let cap = thread_cap().min(values.len()).max(1);
    let mut results: Vec<Option<Result<Vec<SweepRow>>>> = Vec::new();
    results.resize_with(values.len(), || None);
    std::thread::scope(|scope| {
        let chunks: Vec<(usize, &[f64])> = {
            let chunk_size = values.len().div_ceil(cap);
            values
                .chunks(chunk_size)
                .enumerate()
                .map(|(ci, c)| (ci * chunk_size, c))
                .collect()
        };
        let mut handles = Vec::new();
        for (offset, chunk) in chunks {
            let handle = scope.spawn(move || {
                let mut out = Vec::new();
                for &v in chunk {
                    out.push(sweep_trial(spec, equilibrium_params, data, sw, v, temp_cfg));
                }
                (offset, out)
            });
            handles.push(handle);
        }
        for h in handles {
            let (offset, out) = h.join().expect("sweep worker panicked");
            for (i, r) in out.into_iter().enumerate() {
                results[offset + i] = Some(r);
            }
        }
    });

    let mut rows = Vec::new();
    for r in results.into_iter().flatten() {
        rows.extend(r?);
    }
    Ok(SweepResult {
        varied: sw.varied,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMode {
    Hot,
    Cold,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneReport {
    pub layer: String,
    pub mode: PruneMode,
    pub fraction: f64,
    pub pruned_rows: Vec<usize>,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    /// Per-layer thermodynamic T change after continued training,
    /// measured before vs after pruning with the same window.
    pub delta_t: Vec<(String, f64)>,
}

/// Zero out the weight columns (output rows) and biases of the selected
/// hottest or coldest rows of `layer`, ranked by the MSV map's row means,
/// then re-evaluate accuracy on the test split. Shapes stay stable so
/// snapshots remain comparable; the input params are untouched.
#[allow(clippy::too_many_arguments)]
pub fn prune_rows_by_msv(
    spec: &ModelSpec,
    params: &ParamSet,
    msv: &MsvMap,
    layer: &str,
    fraction: f64,
    mode: PruneMode,
    data: &DatasetSplit,
    measure: Option<&MeasureSpec>,
) -> Result<(PruneReport, ParamSet)> {
    if !(0.0..1.0).contains(&fraction) || fraction <= 0.0 {
        return Err(Error::config("prune fraction must be in (0,1)"));
    }
    if msv.layer_name != layer {
        return Err(Error::config(format!(
            "MSV map is for layer {}, not {layer}",
            msv.layer_name
        )));
    }
    let lp = params
        .layer(layer)
        .ok_or_else(|| Error::config(format!("unknown layer {layer}")))?;
    let w = lp
        .tensor("weight")
        .ok_or_else(|| Error::config(format!("layer {layer} has no weight tensor")))?;
    let n_rows = msv.row_means.len();
    if n_rows != w.cols() {
        return Err(Error::config("MSV row means do not match the weight output width"));
    }
    let k = (fraction * n_rows as f64).round() as usize;
    if k == 0 {
        return Err(Error::config(format!(
            "fraction {fraction} selects zero of {n_rows} rows"
        )));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.sort_by(|&a, &b| {
        msv.row_means[a]
            .partial_cmp(&msv.row_means[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut pruned: Vec<usize> = match mode {
        PruneMode::Hot => order[n_rows - k..].to_vec(),
        PruneMode::Cold => order[..k].to_vec(),
    };
    pruned.sort_unstable();

    let mut after = params.clone();
    {
        let lp = after.layer_mut(layer).unwrap();
        let w = lp.tensor_mut("weight").unwrap();
        for i in 0..w.rows() {
            for &j in &pruned {
                w.set(i, j, 0.0);
            }
        }
        if let Some(b) = lp.tensor_mut("bias") {
            for &j in &pruned {
                b.set(0, j, 0.0);
            }
        }
    }

    let accuracy_before = evaluate_accuracy(spec, params, &data.test)?;
    let accuracy_after = evaluate_accuracy(spec, &after, &data.test)?;

    let temp_cfg = TemperatureConfig::default();
    let delta_t = match measure {
        Some(ms) => {
            let (before, _) = measure_window(spec, params, data, ms, &temp_cfg)?;
            let (after_series, _) = measure_window(spec, &after, data, ms, &temp_cfg)?;
            before
                .iter()
                .zip(&after_series)
                .map(|(b, a)| (b.layer_name.clone(), a.thermodynamic - b.thermodynamic))
                .collect()
        }
        None => Vec::new(),
    };

    Ok((
        PruneReport {
            layer: layer.to_string(),
            mode,
            fraction,
            pruned_rows: pruned,
            accuracy_before,
            accuracy_after,
            delta_t,
        },
        after,
    ))
}

/// MSV map for a layer from a snapshot log, default axis convention.
pub fn msv_from_log(log: &SnapshotLog, layer: &str) -> Result<MsvMap> {
    per_weight_msv(log, layer, MsvAxis::OutputDim)
}
