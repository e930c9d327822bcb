//! Artifact persistence: CSV/JSON outputs and the per-run manifest.
//! All CSVs carry a header row; floats are printed in shortest
//! round-trippable scientific notation.

use crate::error::Result;
use crate::experiment::{EpochStat, SweepResult, SweepVar};
use crate::fit::FitResult;
use crate::thermo::{MsvMap, TemperatureSeries};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{BufWriter, Write};
use std::path::Path;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for line in lines {
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_training_log_csv(log: &[EpochStat], path: &Path) -> Result<()> {
    let header = "epoch,eta,loss,train_acc,test_acc".to_string();
    let rows = log.iter().map(|s| {
        format!(
            "{},{},{},{},{}",
            s.epoch,
            fmt_f64(s.eta),
            fmt_f64(s.loss),
            fmt_f64(s.train_acc),
            fmt_f64(s.test_acc)
        )
    });
    write_lines(path, std::iter::once(header).chain(rows))
}

/// Columns: layer, epoch, T_inst.
pub fn write_temperature_csv(series: &[TemperatureSeries], path: &Path) -> Result<()> {
    let header = "layer,epoch,T_inst".to_string();
    let rows = series.iter().flat_map(|ts| {
        ts.instantaneous
            .iter()
            .map(move |&(epoch, t)| format!("{},{},{}", ts.layer_name, epoch, fmt_f64(t)))
    });
    write_lines(path, std::iter::once(header).chain(rows))
}

#[derive(Serialize)]
struct TemperatureSummary<'a> {
    layer: &'a str,
    thermodynamic_t: f64,
    dof: usize,
    k_b: f64,
    window_epochs: usize,
}

pub fn write_temperature_summary_json(series: &[TemperatureSeries], path: &Path) -> Result<()> {
    let summary: Vec<TemperatureSummary> = series
        .iter()
        .map(|ts| TemperatureSummary {
            layer: &ts.layer_name,
            thermodynamic_t: ts.thermodynamic,
            dof: ts.dof,
            k_b: ts.k_b,
            window_epochs: ts.instantaneous.len(),
        })
        .collect();
    std::fs::write(path, serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

/// Columns: varied, value, zeta, layer, T.
pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let varied = match result.varied {
        SweepVar::Eta => "eta",
        SweepVar::BatchSize => "batch_size",
    };
    let header = "varied,value,zeta,layer,T".to_string();
    let rows = result.rows.iter().map(|r| {
        format!(
            "{},{},{},{},{}",
            varied,
            fmt_f64(r.value),
            fmt_f64(r.zeta),
            r.layer,
            fmt_f64(r.temperature)
        )
    });
    write_lines(path, std::iter::once(header).chain(rows))
}

/// Parse a sweep CSV back into (value, layer, T) triples.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<(f64, String, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(crate::error::Error::data(format!(
                "sweep CSV line {}: expected 5 fields",
                i + 1
            )));
        }
        let value: f64 = fields[1]
            .parse()
            .map_err(|e| crate::error::Error::data(format!("line {}: {e}", i + 1)))?;
        let t: f64 = fields[4]
            .parse()
            .map_err(|e| crate::error::Error::data(format!("line {}: {e}", i + 1)))?;
        out.push((value, fields[3].to_string(), t));
    }
    Ok(out)
}

pub fn write_fits_json(fits: &[FitResult], path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(fits)?)?;
    Ok(())
}

/// Full matrix CSV: one row per weight-matrix row, header col_0..col_{n-1}.
pub fn write_msv_matrix_csv(map: &MsvMap, path: &Path) -> Result<()> {
    let header = (0..map.msv.cols())
        .map(|j| format!("col_{j}"))
        .collect::<Vec<_>>()
        .join(",");
    let rows = (0..map.msv.rows()).map(|i| {
        map.msv
            .row(i)
            .iter()
            .map(|&v| fmt_f64(v))
            .collect::<Vec<_>>()
            .join(",")
    });
    write_lines(path, std::iter::once(header).chain(rows))
}

/// Flattened view (row-major): columns index, msv.
pub fn write_msv_flat_csv(map: &MsvMap, path: &Path) -> Result<()> {
    let header = "index,msv".to_string();
    let rows = map
        .msv
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{i},{}", fmt_f64(v)));
    write_lines(path, std::iter::once(header).chain(rows))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Written atomically at run end; resolved config + seed + input digests
/// are sufficient to re-run the experiment.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub tool_version: String,
    pub input_digests: Vec<(String, String)>,
    pub duration_secs: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            input_digests: Vec::new(),
            duration_secs: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.input_digests
            .push((path.display().to_string(), sha256_file(path)?));
        Ok(())
    }

    /// Write to `dir/run_manifest.json` via a temp file + rename.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join(".run_manifest.json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)?)?;
        std::fs::rename(&tmp, dir.join("run_manifest.json"))?;
        Ok(())
    }
}
