//! Command-line front end: dataset synthesis, training, temperature
//! measurement, hyperparameter sweeps, curve fits, MSV maps, and the
//! pruning probe. Every command writes its artifacts plus a run manifest
//! under --out. Flags override --config file values override defaults.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thermognn::error::Error;
use thermognn::experiment::{
    measure_window, prune_rows_by_msv, sweep, train_to_equilibrium, MeasureSpec, PruneMode,
    SweepSpec, SweepVar, TrainConfig, DEFAULT_FIXED_ETA,
};
use thermognn::fit::{fit_linear, fit_power_law, fit_quadratic, FitForm, FitResult};
use thermognn::graph::{load_jsonl, save_jsonl, synth_dataset, DatasetSplit};
use thermognn::model::ModelSpec;
use thermognn::optim::{LrSchedule, OptimizerKind};
use thermognn::report::{
    write_fits_json, write_msv_flat_csv, write_msv_matrix_csv, write_sweep_csv,
    write_temperature_csv, write_temperature_summary_json, write_training_log_csv, RunManifest,
};
use thermognn::snaplog::{load_params, load_snapshot_log, save_params, save_snapshot_log};
use thermognn::thermo::{per_weight_msv, MsvAxis, TemperatureConfig};
use thermognn::Result;

#[derive(Parser)]
#[command(name = "thermognn", version, about = "GNN training with per-layer weight temperature")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Master seed; every run is deterministic given the seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Gcn,
    Gat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::Adam,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VaryArg {
    Eta,
    Batch,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hot,
    Cold,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Power,
    Linear,
    Quadratic,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as JSONL.
    Synth {
        #[arg(long, default_value_t = 500)]
        n_graphs: usize,
        #[arg(long, default_value_t = 75)]
        nodes: usize,
        #[arg(long, default_value_t = 10)]
        classes: usize,
    },
    /// Train a preset model to equilibrium; writes checkpoint, training
    /// log, and the per-epoch snapshot log.
    Train {
        #[arg(long, value_enum, default_value_t = PresetArg::Gcn)]
        preset: PresetArg,
        /// Dataset: "synth" or a JSONL path.
        #[arg(long, default_value = "synth")]
        data: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long, value_enum)]
        optimizer: Option<OptimizerArg>,
        #[arg(long)]
        base_eta: Option<f64>,
        #[arg(long)]
        decay_factor: Option<f64>,
        #[arg(long)]
        decay_every: Option<usize>,
        /// Use the 600-epoch schedule instead of the desk-scale one.
        #[arg(long, default_value_t = false)]
        full_scale: bool,
    },
    /// Continue from a checkpoint at constant hyperparameters and record
    /// per-layer temperatures over the window.
    Measure {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "synth")]
        data: String,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 20)]
        window: usize,
        #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
        optimizer: OptimizerArg,
    },
    /// Run measurement windows over a grid of eta or batch-size values,
    /// all starting from one checkpoint; writes the sweep table and
    /// per-layer power-law fits.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "synth")]
        data: String,
        #[arg(long, value_enum)]
        vary: VaryArg,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_FIXED_ETA)]
        fixed_eta: f64,
        #[arg(long, default_value_t = 32)]
        fixed_beta: usize,
        #[arg(long, default_value_t = 20)]
        window: usize,
        #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
        optimizer: OptimizerArg,
    },
    /// Fit curves to a sweep CSV, one fit per layer.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = FormArg::Power)]
        form: FormArg,
    },
    /// Per-weight mean-squared-velocity map for one layer of a snapshot log.
    Msv {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        layer: String,
    },
    /// Zero the hottest or coldest output rows of a layer and report the
    /// accuracy change.
    Prune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long, default_value = "synth")]
        data: String,
        #[arg(long)]
        layer: String,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        fraction: f64,
        /// Also measure per-layer temperature change over this window.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
    },
}

const EXIT_USAGE: i32 = 2;
const EXIT_RUNTIME: i32 = 1;

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            };
            std::process::exit(code);
        }
    }
}

/// Optional JSON config file; flat string/number map merged under flags.
struct FileConfig(serde_json::Value);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        match path {
            None => Ok(FileConfig(serde_json::Value::Null)),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::config(format!("cannot read config {}: {e}", p.display())))?;
                let v: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| Error::config(format!("config {}: {e}", p.display())))?;
                if !v.is_object() {
                    return Err(Error::config("config file must hold a JSON object"));
                }
                Ok(FileConfig(v))
            }
        }
    }

    fn usize_or(&self, key: &str, flag: Option<usize>, default: usize) -> usize {
        flag.or_else(|| self.0.get(key).and_then(|v| v.as_u64()).map(|v| v as usize))
            .unwrap_or(default)
    }

    fn f64_or(&self, key: &str, flag: Option<f64>, default: f64) -> f64 {
        flag.or_else(|| self.0.get(key).and_then(|v| v.as_f64()))
            .unwrap_or(default)
    }
}

fn out_dir(global: &GlobalArgs) -> Result<PathBuf> {
    let out = global
        .out
        .clone()
        .ok_or_else(|| Error::config("--out <dir> is required"))?;
    std::fs::create_dir_all(&out)?;
    Ok(out)
}

fn resolve_dataset(data: &str, seed: u64, cfg: &FileConfig) -> Result<(DatasetSplit, Option<PathBuf>)> {
    if data == "synth" {
        let n = cfg.usize_or("n_graphs", None, 500);
        let nodes = cfg.usize_or("nodes", None, 75);
        let classes = cfg.usize_or("classes", None, 10);
        Ok((synth_dataset(seed, n, nodes, classes)?, None))
    } else {
        let path = PathBuf::from(data);
        let ds = load_jsonl(&path)?;
        Ok((ds, Some(path)))
    }
}

fn load_checkpoint(dir: &Path) -> Result<(ModelSpec, thermognn::model::ParamSet)> {
    let model_path = dir.join("model.json");
    if !model_path.exists() {
        return Err(Error::config(format!(
            "checkpoint {} is missing model.json",
            dir.display()
        )));
    }
    let spec = ModelSpec::from_json(&std::fs::read_to_string(&model_path)?)?;
    let params = load_params(dir)?;
    Ok((spec, params))
}

fn finish(mut manifest: RunManifest, started: Instant, out: &Path) -> Result<()> {
    manifest.duration_secs = started.elapsed().as_secs_f64();
    manifest.write(out)
}

fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    let cfg = FileConfig::load(cli.global.config.as_deref())?;
    let seed = cli.global.seed;

    match cli.command {
        Command::Synth { n_graphs, nodes, classes } => {
            let out = out_dir(&cli.global)?;
            let n_graphs = cfg.usize_or("n_graphs", Some(n_graphs), 500);
            let nodes = cfg.usize_or("nodes", Some(nodes), 75);
            let classes = cfg.usize_or("classes", Some(classes), 10);
            let ds = synth_dataset(seed, n_graphs, nodes, classes)?;
            let path = out.join("dataset.jsonl");
            save_jsonl(&ds, &path)?;
            let mut manifest = RunManifest::new(
                "synth",
                serde_json::json!({
                    "n_graphs": n_graphs, "nodes": nodes, "classes": classes
                }),
                seed,
            );
            manifest.outputs.push("dataset.jsonl".into());
            println!(
                "wrote {} ({} train / {} test graphs)",
                path.display(),
                ds.train.len(),
                ds.test.len()
            );
            finish(manifest, started, &out)
        }

        Command::Train {
            preset,
            data,
            epochs,
            batch_size,
            optimizer,
            base_eta,
            decay_factor,
            decay_every,
            full_scale,
        } => {
            let out = out_dir(&cli.global)?;
            let (ds, data_path) = resolve_dataset(&data, seed, &cfg)?;
            let base = if full_scale {
                TrainConfig::paper_scale(seed)
            } else {
                TrainConfig::desk(seed)
            };
            let schedule = LrSchedule::new(
                cfg.f64_or("base_eta", base_eta, base.schedule.base_eta),
                cfg.f64_or("decay_factor", decay_factor, base.schedule.decay_factor),
                cfg.usize_or("decay_every", decay_every, base.schedule.decay_every),
            )?;
            let train_cfg = TrainConfig {
                optimizer: optimizer.map(Into::into).unwrap_or(base.optimizer),
                schedule,
                epochs: cfg.usize_or("epochs", epochs, base.epochs),
                batch_size: cfg.usize_or("batch_size", batch_size, base.batch_size),
                seed,
            };
            let spec = match preset {
                PresetArg::Gcn => ModelSpec::gcn_preset(ds.feature_dim, ds.num_classes),
                PresetArg::Gat => ModelSpec::gat_preset(ds.feature_dim, ds.num_classes),
            };
            let result = train_to_equilibrium(&spec, &ds, &train_cfg)?;

            std::fs::write(out.join("model.json"), spec.to_json()?)?;
            save_params(&result.params, &out)?;
            write_training_log_csv(&result.log, &out.join("train_log.csv"))?;
            save_snapshot_log(&result.snapshots, &out.join("snapshots"))?;

            let mut manifest = RunManifest::new("train", serde_json::to_value(&train_cfg)?, seed);
            if let Some(p) = data_path {
                manifest.add_input(&p)?;
            }
            for o in ["model.json", "params.json", "params.bin", "train_log.csv", "snapshots"] {
                manifest.outputs.push(o.into());
            }
            let last = result.log.last().expect("at least one epoch");
            println!(
                "trained {} epochs: loss {:.4}, train acc {:.3}, test acc {:.3}",
                last.epoch, last.loss, last.train_acc, last.test_acc
            );
            finish(manifest, started, &out)
        }

        Command::Measure {
            checkpoint,
            data,
            eta,
            batch_size,
            window,
            optimizer,
        } => {
            let out = out_dir(&cli.global)?;
            let (spec, params) = load_checkpoint(&checkpoint)?;
            let (ds, data_path) = resolve_dataset(&data, seed, &cfg)?;
            let ms = MeasureSpec {
                eta,
                batch_size,
                window_epochs: window,
                optimizer: optimizer.into(),
                seed,
            };
            let temp_cfg = TemperatureConfig::default();
            let (series, log) = measure_window(&spec, &params, &ds, &ms, &temp_cfg)?;
            write_temperature_csv(&series, &out.join("temperature.csv"))?;
            write_temperature_summary_json(&series, &out.join("temperature_summary.json"))?;
            save_snapshot_log(&log, &out.join("snapshots"))?;

            let mut manifest = RunManifest::new("measure", serde_json::to_value(ms)?, seed);
            manifest.add_input(&checkpoint.join("params.bin"))?;
            if let Some(p) = data_path {
                manifest.add_input(&p)?;
            }
            for o in ["temperature.csv", "temperature_summary.json", "snapshots"] {
                manifest.outputs.push(o.into());
            }
            for ts in &series {
                println!("{}: T = {}", ts.layer_name, ts.thermodynamic);
            }
            finish(manifest, started, &out)
        }

        Command::Sweep {
            checkpoint,
            data,
            vary,
            values,
            fixed_eta,
            fixed_beta,
            window,
            optimizer,
        } => {
            let out = out_dir(&cli.global)?;
            let (spec, params) = load_checkpoint(&checkpoint)?;
            let (ds, data_path) = resolve_dataset(&data, seed, &cfg)?;
            let varied = match vary {
                VaryArg::Eta => SweepVar::Eta,
                VaryArg::Batch => SweepVar::BatchSize,
            };
            if varied == SweepVar::BatchSize {
                if let Some(bad) = values.iter().find(|v| v.fract() != 0.0 || **v < 1.0) {
                    return Err(Error::config(format!(
                        "batch-size grid value {bad} is not a positive integer"
                    )));
                }
            }
            let sw = SweepSpec {
                varied,
                values,
                fixed_eta: cfg.f64_or("fixed_eta", Some(fixed_eta), DEFAULT_FIXED_ETA),
                fixed_beta: cfg.usize_or("fixed_beta", Some(fixed_beta), 32),
                window_epochs: window,
                optimizer: optimizer.into(),
                seed,
            };
            let temp_cfg = TemperatureConfig::default();
            let result = sweep(&spec, &params, &ds, &sw, &temp_cfg)?;
            write_sweep_csv(&result, &out.join("sweep.csv"))?;
            let fits = fit_sweep_rows(&result.rows, FitForm::PowerLaw)?;
            write_fits_json(&fits, &out.join("fits.json"))?;

            let mut manifest = RunManifest::new("sweep", serde_json::to_value(&sw)?, seed);
            manifest.add_input(&checkpoint.join("params.bin"))?;
            if let Some(p) = data_path {
                manifest.add_input(&p)?;
            }
            manifest.outputs.push("sweep.csv".into());
            manifest.outputs.push("fits.json".into());
            println!("{} sweep rows, {} layer fits", result.rows.len(), fits.len());
            finish(manifest, started, &out)
        }

        Command::Fit { input, form } => {
            let out = out_dir(&cli.global)?;
            let rows = thermognn::report::read_sweep_csv(&input)?;
            let rows: Vec<thermognn::experiment::SweepRow> = rows
                .into_iter()
                .map(|(value, layer, temperature)| thermognn::experiment::SweepRow {
                    value,
                    zeta: 0.0,
                    layer,
                    temperature,
                })
                .collect();
            let form = match form {
                FormArg::Power => FitForm::PowerLaw,
                FormArg::Linear => FitForm::Linear,
                FormArg::Quadratic => FitForm::Quadratic,
            };
            let fits = fit_sweep_rows(&rows, form)?;
            write_fits_json(&fits, &out.join("fits.json"))?;

            let mut manifest = RunManifest::new(
                "fit",
                serde_json::json!({"input": input.display().to_string(), "form": format!("{form:?}")}),
                seed,
            );
            manifest.add_input(&input)?;
            manifest.outputs.push("fits.json".into());
            for f in &fits {
                println!("{}: a = {}, c = {}, r2 = {:.4}", f.layer, f.a, f.c_or_b, f.r2);
            }
            finish(manifest, started, &out)
        }

        Command::Msv { snapshots, layer } => {
            let out = out_dir(&cli.global)?;
            let log = load_snapshot_log(&snapshots)?;
            let names = log.layer_names();
            if !names.contains(&layer) {
                return Err(Error::config(format!(
                    "unknown layer {layer}; valid layers: {}",
                    names.join(", ")
                )));
            }
            let map = per_weight_msv(&log, &layer, MsvAxis::OutputDim)?;
            let matrix_name = format!("msv_{layer}.csv");
            let flat_name = format!("msv_{layer}_flat.csv");
            write_msv_matrix_csv(&map, &out.join(&matrix_name))?;
            write_msv_flat_csv(&map, &out.join(&flat_name))?;

            let mut manifest = RunManifest::new(
                "msv",
                serde_json::json!({"layer": layer, "snapshots": snapshots.display().to_string()}),
                seed,
            );
            manifest.add_input(&snapshots.join("manifest.json"))?;
            manifest.outputs.push(matrix_name);
            manifest.outputs.push(flat_name);
            println!("MSV map {}x{} for layer {layer}", map.msv.rows(), map.msv.cols());
            finish(manifest, started, &out)
        }

        Command::Prune {
            checkpoint,
            snapshots,
            data,
            layer,
            mode,
            fraction,
            window,
            eta,
        } => {
            let out = out_dir(&cli.global)?;
            let (spec, params) = load_checkpoint(&checkpoint)?;
            let names: Vec<String> = params.layers.iter().map(|l| l.name.clone()).collect();
            if !names.contains(&layer) {
                return Err(Error::config(format!(
                    "unknown layer {layer}; valid layers: {}",
                    names.join(", ")
                )));
            }
            let (ds, data_path) = resolve_dataset(&data, seed, &cfg)?;
            let log = load_snapshot_log(&snapshots)?;
            let map = per_weight_msv(&log, &layer, MsvAxis::OutputDim)?;
            let mode = match mode {
                ModeArg::Hot => PruneMode::Hot,
                ModeArg::Cold => PruneMode::Cold,
            };
            let measure = window.map(|w| MeasureSpec {
                eta: eta.unwrap_or(DEFAULT_FIXED_ETA),
                batch_size: 32,
                window_epochs: w,
                optimizer: OptimizerKind::Sgd,
                seed,
            });
            let (report, after) = prune_rows_by_msv(
                &spec,
                &params,
                &map,
                &layer,
                fraction,
                mode,
                &ds,
                measure.as_ref(),
            )?;
            std::fs::write(
                out.join("prune_report.json"),
                serde_json::to_string_pretty(&report)?,
            )?;
            std::fs::write(out.join("model.json"), spec.to_json()?)?;
            save_params(&after, &out)?;

            let mut manifest = RunManifest::new(
                "prune",
                serde_json::json!({
                    "layer": layer, "mode": report.mode, "fraction": fraction,
                    "window": window, "eta": eta
                }),
                seed,
            );
            manifest.add_input(&checkpoint.join("params.bin"))?;
            manifest.add_input(&snapshots.join("manifest.json"))?;
            if let Some(p) = data_path {
                manifest.add_input(&p)?;
            }
            for o in ["prune_report.json", "model.json", "params.json", "params.bin"] {
                manifest.outputs.push(o.into());
            }
            println!(
                "pruned {} rows of {layer}: accuracy {:.3} -> {:.3}",
                report.pruned_rows.len(),
                report.accuracy_before,
                report.accuracy_after
            );
            finish(manifest, started, &out)
        }
    }
}

/// One fit per layer over (value, T) pairs collected from sweep rows.
fn fit_sweep_rows(
    rows: &[thermognn::experiment::SweepRow],
    form: FitForm,
) -> Result<Vec<FitResult>> {
    let mut layers: Vec<String> = Vec::new();
    for r in rows {
        if !layers.contains(&r.layer) {
            layers.push(r.layer.clone());
        }
    }
    let mut fits = Vec::new();
    for layer in &layers {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| &r.layer == layer)
            .map(|r| (r.value, r.temperature))
            .unzip();
        let fit = match form {
            FitForm::PowerLaw => fit_power_law(layer, &xs, &ys),
            FitForm::Linear => fit_linear(layer, &xs, &ys),
            FitForm::Quadratic => fit_quadratic(layer, &xs, &ys),
        }?;
        fits.push(fit);
    }
    Ok(fits)
}
