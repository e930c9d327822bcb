//! Layer primitives: GCN and GAT convolutions, dense layers, pooling,
//! softmax cross-entropy. Forward passes return pre-activations; the
//! matching hand-derived adjoints live alongside.

use crate::error::{Error, Result};
use crate::graph::{add_self_loops, sym_norm_coeffs, GraphBatch};
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    None,
}

impl Activation {
    pub fn apply(&self, pre: &Matrix, context: &str) -> Result<Matrix> {
        match self {
            Activation::Tanh => pre.map_checked(f64::tanh, context),
            Activation::Relu => pre.map_checked(|v| v.max(0.0), context),
            Activation::None => {
                if !pre.is_finite() {
                    return Err(Error::numeric(format!("non-finite value in {context}")));
                }
                Ok(pre.clone())
            }
        }
    }

    /// Elementwise derivative evaluated at the pre-activation.
    pub fn deriv_from_pre(&self, pre: &Matrix) -> Matrix {
        match self {
            Activation::Tanh => pre.map(|v| {
                let t = v.tanh();
                1.0 - t * t
            }),
            Activation::Relu => pre.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            Activation::None => pre.map(|_| 1.0),
        }
    }
}

/// Sparse aggregation M[dst] += c_e * X[src] over a weighted edge list.
fn propagate(x: &Matrix, edges: &[(usize, usize)], coeffs: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for (&(src, dst), &c) in edges.iter().zip(coeffs) {
        let (src_row, dst_row) = (src, dst);
        let cols = x.cols();
        let src_data: Vec<f64> = x.row(src_row).to_vec();
        let out_row = out.row_mut(dst_row);
        for j in 0..cols {
            out_row[j] += c * src_data[j];
        }
    }
    out
}

/// Reverse of [`propagate`]: dX[src] += c_e * dM[dst].
fn propagate_back(dm: &Matrix, edges: &[(usize, usize)], coeffs: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(dm.rows(), dm.cols());
    for (&(src, dst), &c) in edges.iter().zip(coeffs) {
        let cols = dm.cols();
        let dst_data: Vec<f64> = dm.row(dst).to_vec();
        let out_row = out.row_mut(src);
        for j in 0..cols {
            out_row[j] += c * dst_data[j];
        }
    }
    out
}

pub(crate) struct GcnCache {
    /// Ŝ·X, kept for the weight gradient.
    pub agg: Matrix,
    pub pre: Matrix,
}

pub(crate) fn gcn_layer(
    x: &Matrix,
    edges_with_loops: &[(usize, usize)],
    coeffs: &[f64],
    w: &Matrix,
    b: &Matrix,
) -> Result<GcnCache> {
    let agg = propagate(x, edges_with_loops, coeffs);
    let pre = agg.matmul(w)?.add_row_broadcast(b);
    Ok(GcnCache { agg, pre })
}

pub(crate) fn gcn_layer_backward(
    cache: &GcnCache,
    edges_with_loops: &[(usize, usize)],
    coeffs: &[f64],
    w: &Matrix,
    d_pre: &Matrix,
) -> Result<(Matrix, Matrix, Matrix)> {
    let dw = cache.agg.transpose().matmul(d_pre)?;
    let db = d_pre.col_sums();
    let dm = d_pre.matmul(&w.transpose())?;
    let dx = propagate_back(&dm, edges_with_loops, coeffs);
    Ok((dw, db, dx))
}

/// GCN convolution on a batch: Ŝ·X·W + b with self-loop-augmented,
/// symmetrically normalized adjacency. Pre-activation output.
pub fn gcn_forward(batch: &GraphBatch, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = batch.node_to_graph.len();
    let edges = add_self_loops(&batch.edges, n);
    let coeffs = sym_norm_coeffs(&edges, n);
    Ok(gcn_layer(&batch.node_features, &edges, &coeffs, w, b)?.pre)
}

pub(crate) struct GatHeadCache {
    /// X·W for this head's column block.
    pub wh: Matrix,
    /// Attention coefficient per edge (aligned with edges_with_loops).
    pub alpha: Vec<f64>,
    /// Pre-LeakyReLU attention logits per edge.
    pub zpre: Vec<f64>,
}

pub(crate) struct GatCache {
    pub input: Matrix,
    pub heads: Vec<GatHeadCache>,
    pub pre: Matrix,
}

fn head_block(w: &Matrix, head: usize, out_dim: usize) -> Matrix {
    let mut block = Matrix::zeros(w.rows(), out_dim);
    for i in 0..w.rows() {
        for j in 0..out_dim {
            block.set(i, j, w.get(i, head * out_dim + j));
        }
    }
    block
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn gat_layer(
    x: &Matrix,
    edges_with_loops: &[(usize, usize)],
    in_edges_by_dst: &[Vec<usize>],
    w: &Matrix,
    a_src: &Matrix,
    a_dst: &Matrix,
    b: &Matrix,
    heads: usize,
    concat: bool,
) -> Result<GatCache> {
    let n = x.rows();
    let out_dim = w.cols() / heads;
    let width = if concat { out_dim * heads } else { out_dim };
    let mut pre = Matrix::zeros(n, width);
    let mut head_caches = Vec::with_capacity(heads);
    for h in 0..heads {
        let wb = head_block(w, h, out_dim);
        let wh = x.matmul(&wb)?;
        // score contributions: central node via a_src, neighbor via a_dst
        let mut s_central = vec![0.0; n];
        let mut s_neighbor = vec![0.0; n];
        for i in 0..n {
            let row = wh.row(i);
            let mut sc = 0.0;
            let mut sn = 0.0;
            for f in 0..out_dim {
                sc += a_src.get(h, f) * row[f];
                sn += a_dst.get(h, f) * row[f];
            }
            s_central[i] = sc;
            s_neighbor[i] = sn;
        }
        let mut zpre = vec![0.0; edges_with_loops.len()];
        for (e, &(src, dst)) in edges_with_loops.iter().enumerate() {
            zpre[e] = s_central[dst] + s_neighbor[src];
        }
        let mut alpha = vec![0.0; edges_with_loops.len()];
        for incoming in in_edges_by_dst {
            if incoming.is_empty() {
                continue;
            }
            let max_z = incoming
                .iter()
                .map(|&e| {
                    let z = zpre[e];
                    if z > 0.0 {
                        z
                    } else {
                        LEAKY_SLOPE * z
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for &e in incoming {
                let z = zpre[e];
                let a = if z > 0.0 { z } else { LEAKY_SLOPE * z };
                let ex = (a - max_z).exp();
                alpha[e] = ex;
                total += ex;
            }
            if !total.is_finite() || total == 0.0 {
                return Err(Error::numeric("non-finite attention normalization"));
            }
            for &e in incoming {
                alpha[e] /= total;
            }
        }
        for (e, &(src, dst)) in edges_with_loops.iter().enumerate() {
            let a = alpha[e];
            let src_row: Vec<f64> = wh.row(src).to_vec();
            let col0 = if concat { h * out_dim } else { 0 };
            let weight = if concat { a } else { a / heads as f64 };
            let out_row = pre.row_mut(dst);
            for f in 0..out_dim {
                out_row[col0 + f] += weight * src_row[f];
            }
        }
        head_caches.push(GatHeadCache { wh, alpha, zpre });
    }
    let pre = pre.add_row_broadcast(b);
    if !pre.is_finite() {
        return Err(Error::numeric("non-finite GAT output"));
    }
    Ok(GatCache {
        input: x.clone(),
        heads: head_caches,
        pre,
    })
}

pub(crate) struct GatGrads {
    pub dw: Matrix,
    pub da_src: Matrix,
    pub da_dst: Matrix,
    pub db: Matrix,
    pub dx: Matrix,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn gat_layer_backward(
    cache: &GatCache,
    edges_with_loops: &[(usize, usize)],
    in_edges_by_dst: &[Vec<usize>],
    w: &Matrix,
    a_src: &Matrix,
    a_dst: &Matrix,
    heads: usize,
    concat: bool,
    d_pre: &Matrix,
) -> Result<GatGrads> {
    let n = cache.input.rows();
    let out_dim = w.cols() / heads;
    let mut dw = Matrix::zeros(w.rows(), w.cols());
    let mut da_src = Matrix::zeros(heads, out_dim);
    let mut da_dst = Matrix::zeros(heads, out_dim);
    let db = d_pre.col_sums();
    let mut dx = Matrix::zeros(n, cache.input.cols());
    for h in 0..heads {
        let hc = &cache.heads[h];
        let col0 = if concat { h * out_dim } else { 0 };
        let head_scale = if concat { 1.0 } else { 1.0 / heads as f64 };
        // value path and d_alpha per edge
        let mut dwh = Matrix::zeros(n, out_dim);
        let mut d_alpha = vec![0.0; edges_with_loops.len()];
        for (e, &(src, dst)) in edges_with_loops.iter().enumerate() {
            let g = &d_pre.row(dst)[col0..col0 + out_dim];
            let wh_src = hc.wh.row(src);
            let mut dot = 0.0;
            for f in 0..out_dim {
                dot += g[f] * wh_src[f];
            }
            d_alpha[e] = dot * head_scale;
            let a = hc.alpha[e] * head_scale;
            let g_owned: Vec<f64> = g.to_vec();
            let row = dwh.row_mut(src);
            for f in 0..out_dim {
                row[f] += a * g_owned[f];
            }
        }
        // softmax backward per destination, then LeakyReLU
        let mut d_central = vec![0.0; n];
        let mut d_neighbor = vec![0.0; n];
        for (dst, incoming) in in_edges_by_dst.iter().enumerate() {
            if incoming.is_empty() {
                continue;
            }
            let dot: f64 = incoming.iter().map(|&e| hc.alpha[e] * d_alpha[e]).sum();
            for &e in incoming {
                let dz = hc.alpha[e] * (d_alpha[e] - dot);
                let slope = if hc.zpre[e] > 0.0 { 1.0 } else { LEAKY_SLOPE };
                let d_logit = dz * slope;
                let src = edges_with_loops[e].0;
                d_central[dst] += d_logit;
                d_neighbor[src] += d_logit;
            }
        }
        // score contributions: s_central_i = a_src . Wh_i, s_neighbor_j = a_dst . Wh_j
        for i in 0..n {
            let wh_row = hc.wh.row(i);
            for f in 0..out_dim {
                da_src.set(h, f, da_src.get(h, f) + d_central[i] * wh_row[f]);
                da_dst.set(h, f, da_dst.get(h, f) + d_neighbor[i] * wh_row[f]);
            }
            let row = dwh.row_mut(i);
            for f in 0..out_dim {
                row[f] += d_central[i] * a_src.get(h, f) + d_neighbor[i] * a_dst.get(h, f);
            }
        }
        // through Wh = X * W_h
        let dw_block = cache.input.transpose().matmul(&dwh)?;
        for i in 0..w.rows() {
            for f in 0..out_dim {
                dw.set(i, h * out_dim + f, dw_block.get(i, f));
            }
        }
        let wb = head_block(w, h, out_dim);
        dx.add_assign(&dwh.matmul(&wb.transpose())?);
    }
    Ok(GatGrads {
        dw,
        da_src,
        da_dst,
        db,
        dx,
    })
}

pub(crate) fn group_in_edges(edges: &[(usize, usize)], num_nodes: usize) -> Vec<Vec<usize>> {
    let mut by_dst = vec![Vec::new(); num_nodes];
    for (e, &(_, dst)) in edges.iter().enumerate() {
        by_dst[dst].push(e);
    }
    by_dst
}

/// GAT convolution on a batch. Attention over in-neighbors including a
/// self-loop; heads concatenate when `concat` (else average). Pre-activation
/// output including bias.
#[allow(clippy::too_many_arguments)]
pub fn gat_forward(
    batch: &GraphBatch,
    w: &Matrix,
    a_src: &Matrix,
    a_dst: &Matrix,
    b: &Matrix,
    heads: usize,
    concat: bool,
) -> Result<Matrix> {
    let n = batch.node_to_graph.len();
    let edges = add_self_loops(&batch.edges, n);
    let by_dst = group_in_edges(&edges, n);
    Ok(gat_layer(
        &batch.node_features,
        &edges,
        &by_dst,
        w,
        a_src,
        a_dst,
        b,
        heads,
        concat,
    )?
    .pre)
}

/// Attention coefficients per edge (with self-loops) for one head;
/// rows over each node's in-neighborhood sum to 1.
pub fn gat_attention(
    batch: &GraphBatch,
    w: &Matrix,
    a_src: &Matrix,
    a_dst: &Matrix,
    heads: usize,
) -> Result<(Vec<(usize, usize)>, Vec<Vec<f64>>)> {
    let n = batch.node_to_graph.len();
    let edges = add_self_loops(&batch.edges, n);
    let by_dst = group_in_edges(&edges, n);
    let b = Matrix::zeros(1, w.cols());
    let cache = gat_layer(&batch.node_features, &edges, &by_dst, w, a_src, a_dst, &b, heads, true)?;
    let alphas = cache.heads.iter().map(|h| h.alpha.clone()).collect();
    Ok((edges, alphas))
}

/// X·W + b with row-wise broadcast of b. Pre-activation output.
pub fn linear_forward(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    Ok(x.matmul(w)?.add_row_broadcast(b))
}

pub(crate) fn linear_backward(
    x: &Matrix,
    w: &Matrix,
    d_pre: &Matrix,
) -> Result<(Matrix, Matrix, Matrix)> {
    let dw = x.transpose().matmul(d_pre)?;
    let db = d_pre.col_sums();
    let dx = d_pre.matmul(&w.transpose())?;
    Ok((dw, db, dx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    Mean,
    Max,
}

/// Per-graph pooling of node embeddings. For Max the argmax node per
/// (graph, column) is returned for the backward pass; ties go to the
/// lowest node index.
pub fn global_pool(
    h: &Matrix,
    node_to_graph: &[usize],
    num_graphs: usize,
    mode: PoolMode,
) -> Result<(Matrix, Option<Vec<usize>>)> {
    assert_eq!(h.rows(), node_to_graph.len());
    let dim = h.cols();
    let mut counts = vec![0usize; num_graphs];
    for &g in node_to_graph {
        counts[g] += 1;
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::config("graph with zero nodes in pooling"));
    }
    match mode {
        PoolMode::Mean => {
            let mut out = Matrix::zeros(num_graphs, dim);
            for (i, &g) in node_to_graph.iter().enumerate() {
                let row = h.row(i).to_vec();
                let o = out.row_mut(g);
                for j in 0..dim {
                    o[j] += row[j];
                }
            }
            for g in 0..num_graphs {
                let c = counts[g] as f64;
                for v in out.row_mut(g) {
                    *v /= c;
                }
            }
            Ok((out, None))
        }
        PoolMode::Max => {
            let mut out = Matrix::zeros(num_graphs, dim);
            let mut argmax = vec![usize::MAX; num_graphs * dim];
            for (i, &g) in node_to_graph.iter().enumerate() {
                for j in 0..dim {
                    let v = h.get(i, j);
                    let slot = g * dim + j;
                    if argmax[slot] == usize::MAX || v > out.get(g, j) {
                        out.set(g, j, v);
                        argmax[slot] = i;
                    }
                }
            }
            Ok((out, Some(argmax)))
        }
    }
}

/// Mean softmax cross-entropy over the batch, with the gradient
/// w.r.t. logits: (softmax - onehot)/batch. Max-shifted log-sum-exp.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    assert_eq!(logits.rows(), labels.len());
    if !logits.is_finite() {
        return Err(Error::numeric("non-finite logits in cross_entropy"));
    }
    let n = logits.rows() as f64;
    let c = logits.cols();
    let mut loss = 0.0;
    let mut dlogits = Matrix::zeros(logits.rows(), c);
    for (i, &label) in labels.iter().enumerate() {
        assert!(label < c, "label {label} out of range for {c} classes");
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        let out = dlogits.row_mut(i);
        for j in 0..c {
            let p = (row[j] - lse).exp();
            out[j] = (p - if j == label { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((loss / n, dlogits))
}

/// Fraction of rows whose argmax equals the label; ties to the first index.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let mut best = 0usize;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}
