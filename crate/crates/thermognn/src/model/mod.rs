//! Model architecture specs, named parameter sets, and the two presets.

mod layers;
mod net;

pub use layers::{
    accuracy, cross_entropy, gat_attention, gat_forward, gcn_forward, global_pool,
    linear_forward, Activation, PoolMode,
};
pub use net::{loss_and_grads, model_backward, model_forward, ForwardCache};

use crate::error::{Error, Result};
use crate::linalg::{glorot_init, Matrix, RngStream};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    GcnConv,
    GatConv,
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    #[serde(default = "one")]
    pub heads: usize,
    pub activation: Activation,
}

fn one() -> usize {
    1
}

impl LayerSpec {
    /// Width seen by the next layer: heads concatenate for GATConv.
    pub fn effective_out(&self) -> usize {
        match self.kind {
            LayerKind::GatConv => self.out_dim * self.heads,
            _ => self.out_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    ConcatMeanMax,
    Mean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    pub readout: Readout,
    pub head_mlp: Vec<LayerSpec>,
    pub num_classes: usize,
}

impl ModelSpec {
    /// GCN preset: four GCNConv layers (width 64, tanh), mean||max readout,
    /// one dense layer to the classes.
    pub fn gcn_preset(feature_dim: usize, num_classes: usize) -> ModelSpec {
        let conv = |i: usize, in_dim: usize| LayerSpec {
            name: format!("conv{i}"),
            kind: LayerKind::GcnConv,
            in_dim,
            out_dim: 64,
            heads: 1,
            activation: Activation::Tanh,
        };
        ModelSpec {
            layers: vec![conv(1, feature_dim), conv(2, 64), conv(3, 64), conv(4, 64)],
            readout: Readout::ConcatMeanMax,
            head_mlp: vec![LayerSpec {
                name: "linear".to_string(),
                kind: LayerKind::Linear,
                in_dim: 128,
                out_dim: num_classes,
                heads: 1,
                activation: Activation::None,
            }],
            num_classes,
        }
    }

    /// GAT preset: three 2-head GATConv layers (per-head width 32, ReLU),
    /// mean readout, dense 64-32-16-classes head.
    pub fn gat_preset(feature_dim: usize, num_classes: usize) -> ModelSpec {
        let gat = |i: usize, in_dim: usize| LayerSpec {
            name: format!("gat{i}"),
            kind: LayerKind::GatConv,
            in_dim,
            out_dim: 32,
            heads: 2,
            activation: Activation::Relu,
        };
        let dense = |i: usize, in_dim: usize, out_dim: usize, act: Activation| LayerSpec {
            name: format!("dense{i}"),
            kind: LayerKind::Linear,
            in_dim,
            out_dim,
            heads: 1,
            activation: act,
        };
        ModelSpec {
            layers: vec![gat(1, feature_dim), gat(2, 64), gat(3, 64)],
            readout: Readout::Mean,
            head_mlp: vec![
                dense(1, 64, 32, Activation::Relu),
                dense(2, 32, 16, Activation::Relu),
                dense(3, 16, num_classes, Activation::None),
            ],
            num_classes,
        }
    }

    /// Check dimension chaining through convs, readout, and head.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.head_mlp.is_empty() {
            return Err(Error::config("model needs at least one conv and one head layer"));
        }
        let mut width = self.layers[0].in_dim;
        for l in &self.layers {
            if l.kind == LayerKind::Linear {
                return Err(Error::config(format!(
                    "layer {} : Linear not allowed in the conv stack",
                    l.name
                )));
            }
            if l.in_dim != width {
                return Err(Error::config(format!(
                    "layer {}: in_dim {} != previous width {width}",
                    l.name, l.in_dim
                )));
            }
            if l.kind == LayerKind::GatConv && l.heads < 1 {
                return Err(Error::config(format!("layer {}: heads must be >= 1", l.name)));
            }
            width = l.effective_out();
        }
        let mut width = match self.readout {
            Readout::ConcatMeanMax => 2 * width,
            Readout::Mean => width,
        };
        for l in &self.head_mlp {
            if l.kind != LayerKind::Linear {
                return Err(Error::config(format!(
                    "head layer {} must be Linear",
                    l.name
                )));
            }
            if l.in_dim != width {
                return Err(Error::config(format!(
                    "head layer {}: in_dim {} != previous width {width}",
                    l.name, l.in_dim
                )));
            }
            width = l.out_dim;
        }
        if width != self.num_classes {
            return Err(Error::config(format!(
                "head output width {width} != num_classes {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn all_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().chain(self.head_mlp.iter())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<ModelSpec> {
        let spec: ModelSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Named trainable tensors for one layer. `weight` is the main matrix
/// (for GATConv: in_dim x heads*out_dim with per-head column blocks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub name: String,
    pub tensors: Vec<(String, Matrix)>,
}

impl LayerParams {
    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.tensors.iter_mut().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

/// Ordered per-layer parameter map; iteration order is deterministic
/// (layer declaration order of the owning [`ModelSpec`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<LayerParams>,
}

impl ParamSet {
    pub fn layer(&self, name: &str) -> Option<&LayerParams> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut LayerParams> {
        self.layers.iter_mut().find(|l| l.name == name)
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    name: l.name.clone(),
                    tensors: l
                        .tensors
                        .iter()
                        .map(|(n, m)| (n.clone(), Matrix::zeros(m.rows(), m.cols())))
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.tensors.iter())
            .map(|(_, m)| m.len())
            .sum()
    }

    /// Visit every tensor with a mutable borrow, pairing with `other`.
    pub fn zip_mut(&mut self, other: &ParamSet, mut f: impl FnMut(&mut Matrix, &Matrix)) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            debug_assert_eq!(a.name, b.name);
            for ((_, ma), (_, mb)) in a.tensors.iter_mut().zip(&b.tensors) {
                f(ma, mb);
            }
        }
    }
}

/// Glorot-initialized parameters for `spec`, deterministic in the stream.
pub fn init_params(spec: &ModelSpec, stream: &mut RngStream) -> ParamSet {
    let mut layers = Vec::new();
    for l in spec.all_layers() {
        let mut tensors: Vec<(String, Matrix)> = Vec::new();
        match l.kind {
            LayerKind::GcnConv | LayerKind::Linear => {
                tensors.push(("weight".into(), glorot_init(l.in_dim, l.out_dim, stream)));
                tensors.push(("bias".into(), Matrix::zeros(1, l.out_dim)));
            }
            LayerKind::GatConv => {
                tensors.push((
                    "weight".into(),
                    glorot_init(l.in_dim, l.out_dim * l.heads, stream),
                ));
                let bound = (6.0 / (l.out_dim + 1) as f64).sqrt();
                let mut a_src = Matrix::zeros(l.heads, l.out_dim);
                let mut a_dst = Matrix::zeros(l.heads, l.out_dim);
                for v in a_src.as_mut_slice() {
                    *v = stream.uniform(-bound, bound);
                }
                for v in a_dst.as_mut_slice() {
                    *v = stream.uniform(-bound, bound);
                }
                tensors.push(("a_src".into(), a_src));
                tensors.push(("a_dst".into(), a_dst));
                tensors.push(("bias".into(), Matrix::zeros(1, l.out_dim * l.heads)));
            }
        }
        layers.push(LayerParams {
            name: l.name.clone(),
            tensors,
        });
    }
    ParamSet { layers }
}
