//! On-disk snapshot log: a directory of per-epoch binary tensor files
//! (little-endian f64, tensors concatenated in manifest order) plus a
//! JSON manifest with layer names, tensor shapes, and the epoch list.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{LayerParams, ParamSet};
use crate::thermo::{Snapshot, SnapshotLog};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct TensorShape {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct LayerShape {
    name: String,
    tensors: Vec<TensorShape>,
}

#[derive(Serialize, Deserialize)]
struct LogManifest {
    layers: Vec<LayerShape>,
    epochs: Vec<usize>,
}

fn epoch_file(epoch: usize) -> String {
    format!("epoch_{epoch:06}.bin")
}

fn shapes_of(params: &ParamSet) -> Vec<LayerShape> {
    params
        .layers
        .iter()
        .map(|l| LayerShape {
            name: l.name.clone(),
            tensors: l
                .tensors
                .iter()
                .map(|(n, m)| TensorShape {
                    name: n.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
        })
        .collect()
}

fn write_tensors(params: &ParamSet, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for l in &params.layers {
        for (_, m) in &l.tensors {
            for v in m.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn read_tensors(shapes: &[LayerShape], path: &Path) -> Result<ParamSet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut off = 0usize;
    let mut layers = Vec::new();
    for ls in shapes {
        let mut tensors = Vec::new();
        for ts in &ls.tensors {
            let n = ts.rows * ts.cols;
            let need = n * 8;
            if off + need > bytes.len() {
                return Err(Error::data(format!(
                    "tensor file {} truncated",
                    path.display()
                )));
            }
            let mut data = Vec::with_capacity(n);
            for k in 0..n {
                let chunk: [u8; 8] = bytes[off + k * 8..off + k * 8 + 8].try_into().unwrap();
                data.push(f64::from_le_bytes(chunk));
            }
            off += need;
            tensors.push((ts.name.clone(), Matrix::from_vec(ts.rows, ts.cols, data)));
        }
        layers.push(LayerParams {
            name: ls.name.clone(),
            tensors,
        });
    }
    Ok(ParamSet { layers })
}

pub fn save_snapshot_log(log: &SnapshotLog, dir: &Path) -> Result<()> {
    if log.is_empty() {
        return Err(Error::config("refusing to persist an empty snapshot log"));
    }
    std::fs::create_dir_all(dir)?;
    let manifest = LogManifest {
        layers: shapes_of(&log.snapshots[0].tensors),
        epochs: log.snapshots.iter().map(|s| s.epoch).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    for s in &log.snapshots {
        write_tensors(&s.tensors, &dir.join(epoch_file(s.epoch)))?;
    }
    Ok(())
}

pub fn load_snapshot_log(dir: &Path) -> Result<SnapshotLog> {
    let manifest_path = dir.join("manifest.json");
    let json = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: LogManifest = serde_json::from_str(&json)?;
    let mut log = SnapshotLog::new();
    for &epoch in &manifest.epochs {
        let tensors = read_tensors(&manifest.layers, &dir.join(epoch_file(epoch)))?;
        log.snapshots.push(Snapshot { epoch, tensors });
    }
    Ok(log)
}

/// Checkpoint a single parameter set (same binary layout, one file).
pub fn save_params(params: &ParamSet, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = LogManifest {
        layers: shapes_of(params),
        epochs: vec![0],
    };
    std::fs::write(
        dir.join("params.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    write_tensors(params, &dir.join("params.bin"))
}

pub fn load_params(dir: &Path) -> Result<ParamSet> {
    let manifest_path = dir.join("params.json");
    let json = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: LogManifest = serde_json::from_str(&json)?;
    read_tensors(&manifest.layers, &dir.join("params.bin"))
}
