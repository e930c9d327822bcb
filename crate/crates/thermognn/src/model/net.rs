//! Full-model forward and backward passes over a batch.

use super::layers::{
    cross_entropy, gat_layer, gat_layer_backward, gcn_layer, gcn_layer_backward, global_pool,
    group_in_edges, linear_backward, linear_forward, GatCache, GcnCache, PoolMode,
};
use super::{LayerKind, ModelSpec, ParamSet, Readout};
use crate::error::{Error, Result};
use crate::graph::{add_self_loops, sym_norm_coeffs, GraphBatch};
use crate::linalg::Matrix;

enum LayerTrace {
    Gcn(GcnCache),
    Gat(GatCache),
    Linear { input: Matrix, pre: Matrix },
}

/// Everything recorded during a forward pass that the exact adjoint needs.
pub struct ForwardCache {
    edges_with_loops: Vec<(usize, usize)>,
    gcn_coeffs: Vec<f64>,
    in_edges_by_dst: Vec<Vec<usize>>,
    node_to_graph: Vec<usize>,
    num_graphs: usize,
    conv: Vec<LayerTrace>,
    pooled_input: Matrix,
    max_argmax: Option<Vec<usize>>,
    head: Vec<LayerTrace>,
}

/// Run the model over a batch; returns graph-level logits and a cache
/// sufficient for [`model_backward`].
pub fn model_forward(
    spec: &ModelSpec,
    params: &ParamSet,
    batch: &GraphBatch,
) -> Result<(Matrix, ForwardCache)> {
    spec.validate()?;
    let n = batch.node_to_graph.len();
    let edges = add_self_loops(&batch.edges, n);
    let needs_gcn = spec.layers.iter().any(|l| l.kind == LayerKind::GcnConv);
    let needs_gat = spec.layers.iter().any(|l| l.kind == LayerKind::GatConv);
    let gcn_coeffs = if needs_gcn { sym_norm_coeffs(&edges, n) } else { Vec::new() };
    let in_edges_by_dst = if needs_gat { group_in_edges(&edges, n) } else { Vec::new() };

    let mut h = batch.node_features.clone();
    let mut conv = Vec::with_capacity(spec.layers.len());
    for l in &spec.layers {
        let p = params
            .layer(&l.name)
            .ok_or_else(|| Error::config(format!("missing params for layer {}", l.name)))?;
        let context = format!("layer {}", l.name);
        match l.kind {
            LayerKind::GcnConv => {
                let w = p.tensor("weight").unwrap();
                let b = p.tensor("bias").unwrap();
                let cache = gcn_layer(&h, &edges, &gcn_coeffs, w, b)?;
                h = l.activation.apply(&cache.pre, &context)?;
                conv.push(LayerTrace::Gcn(cache));
            }
            LayerKind::GatConv => {
                let w = p.tensor("weight").unwrap();
                let a_src = p.tensor("a_src").unwrap();
                let a_dst = p.tensor("a_dst").unwrap();
                let b = p.tensor("bias").unwrap();
                let cache = gat_layer(&h, &edges, &in_edges_by_dst, w, a_src, a_dst, b, l.heads, true)?;
                h = l.activation.apply(&cache.pre, &context)?;
                conv.push(LayerTrace::Gat(cache));
            }
            LayerKind::Linear => unreachable!("validated"),
        }
    }

    let pooled_input = h;
    let (mean_pool, _) = global_pool(&pooled_input, &batch.node_to_graph, batch.size, PoolMode::Mean)?;
    let (mut pooled, max_argmax) = match spec.readout {
        Readout::Mean => (mean_pool.clone(), None),
        Readout::ConcatMeanMax => {
            let (max_pool, arg) =
                global_pool(&pooled_input, &batch.node_to_graph, batch.size, PoolMode::Max)?;
            let dim = mean_pool.cols();
            let mut cat = Matrix::zeros(batch.size, 2 * dim);
            for g in 0..batch.size {
                cat.row_mut(g)[..dim].copy_from_slice(mean_pool.row(g));
                cat.row_mut(g)[dim..].copy_from_slice(max_pool.row(g));
            }
            (cat, arg)
        }
    };

    let mut head = Vec::with_capacity(spec.head_mlp.len());
    for l in &spec.head_mlp {
        let p = params
            .layer(&l.name)
            .ok_or_else(|| Error::config(format!("missing params for layer {}", l.name)))?;
        let w = p.tensor("weight").unwrap();
        let b = p.tensor("bias").unwrap();
        let pre = linear_forward(&pooled, w, b)?;
        let out = l.activation.apply(&pre, &format!("layer {}", l.name))?;
        head.push(LayerTrace::Linear { input: pooled, pre });
        pooled = out;
    }
    let logits = pooled;

    Ok((
        logits,
        ForwardCache {
            edges_with_loops: edges,
            gcn_coeffs,
            in_edges_by_dst,
            node_to_graph: batch.node_to_graph.clone(),
            num_graphs: batch.size,
            conv,
            pooled_input,
            max_argmax,
            head,
        },
    ))
}

/// Exact adjoint of the recorded forward pass; returns gradients for
/// every trainable tensor, shaped like `params`.
pub fn model_backward(
    spec: &ModelSpec,
    params: &ParamSet,
    cache: &ForwardCache,
    dlogits: &Matrix,
) -> Result<ParamSet> {
    let mut grads = params.zeros_like();
    let mut d_out = dlogits.clone();

    for (l, trace) in spec.head_mlp.iter().zip(cache.head.iter()).rev() {
        let LayerTrace::Linear { input, pre } = trace else {
            return Err(Error::config("cache/spec mismatch in head"));
        };
        let d_pre = elementwise_mul(&d_out, &l.activation.deriv_from_pre(pre));
        let p = params.layer(&l.name).unwrap();
        let (dw, db, dx) = linear_backward(input, p.tensor("weight").unwrap(), &d_pre)?;
        let gl = grads.layer_mut(&l.name).unwrap();
        gl.tensor_mut("weight").unwrap().add_assign(&dw);
        gl.tensor_mut("bias").unwrap().add_assign(&db);
        d_out = dx;
    }

    // readout backward: distribute graph-level gradient to node rows
    let node_dim = cache.pooled_input.cols();
    let mut counts = vec![0usize; cache.num_graphs];
    for &g in &cache.node_to_graph {
        counts[g] += 1;
    }
    let mut d_nodes = Matrix::zeros(cache.pooled_input.rows(), node_dim);
    match spec.readout {
        Readout::Mean => {
            for (i, &g) in cache.node_to_graph.iter().enumerate() {
                let c = counts[g] as f64;
                let src = d_out.row(g).to_vec();
                let row = d_nodes.row_mut(i);
                for j in 0..node_dim {
                    row[j] += src[j] / c;
                }
            }
        }
        Readout::ConcatMeanMax => {
            let argmax = cache
                .max_argmax
                .as_ref()
                .ok_or_else(|| Error::config("cache missing max-pool indices"))?;
            for (i, &g) in cache.node_to_graph.iter().enumerate() {
                let c = counts[g] as f64;
                let src = d_out.row(g)[..node_dim].to_vec();
                let row = d_nodes.row_mut(i);
                for j in 0..node_dim {
                    row[j] += src[j] / c;
                }
            }
            for g in 0..cache.num_graphs {
                let src = d_out.row(g)[node_dim..].to_vec();
                for j in 0..node_dim {
                    let node = argmax[g * node_dim + j];
                    d_nodes.set(node, j, d_nodes.get(node, j) + src[j]);
                }
            }
        }
    }

    let mut d_h = d_nodes;
    for (l, trace) in spec.layers.iter().zip(cache.conv.iter()).rev() {
        let p = params.layer(&l.name).unwrap();
        match (l.kind, trace) {
            (LayerKind::GcnConv, LayerTrace::Gcn(c)) => {
                let d_pre = elementwise_mul(&d_h, &l.activation.deriv_from_pre(&c.pre));
                let (dw, db, dx) = gcn_layer_backward(
                    c,
                    &cache.edges_with_loops,
                    &cache.gcn_coeffs,
                    p.tensor("weight").unwrap(),
                    &d_pre,
                )?;
                let gl = grads.layer_mut(&l.name).unwrap();
                gl.tensor_mut("weight").unwrap().add_assign(&dw);
                gl.tensor_mut("bias").unwrap().add_assign(&db);
                d_h = dx;
            }
            (LayerKind::GatConv, LayerTrace::Gat(c)) => {
                let d_pre = elementwise_mul(&d_h, &l.activation.deriv_from_pre(&c.pre));
                let g = gat_layer_backward(
                    c,
                    &cache.edges_with_loops,
                    &cache.in_edges_by_dst,
                    p.tensor("weight").unwrap(),
                    p.tensor("a_src").unwrap(),
                    p.tensor("a_dst").unwrap(),
                    l.heads,
                    true,
                    &d_pre,
                )?;
                let gl = grads.layer_mut(&l.name).unwrap();
                gl.tensor_mut("weight").unwrap().add_assign(&g.dw);
                gl.tensor_mut("a_src").unwrap().add_assign(&g.da_src);
                gl.tensor_mut("a_dst").unwrap().add_assign(&g.da_dst);
                gl.tensor_mut("bias").unwrap().add_assign(&g.db);
                d_h = g.dx;
            }
            _ => return Err(Error::config("cache/spec mismatch in conv stack")),
        }
    }

    Ok(grads)
}

/// Loss and parameter gradients for one batch in a single call.
pub fn loss_and_grads(
    spec: &ModelSpec,
    params: &ParamSet,
    batch: &GraphBatch,
) -> Result<(f64, Matrix, ParamSet)> {
    let (logits, cache) = model_forward(spec, params, batch)?;
    let (loss, dlogits) = cross_entropy(&logits, &batch.labels)?;
    let grads = model_backward(spec, params, &cache, &dlogits)?;
    Ok((loss, logits, grads))
}

fn elementwise_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = a.clone();
    for (x, y) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *x *= y;
    }
    out
}
