//! Shared helpers for integration tests: random small graphs and a
//! central-finite-difference gradient reference.

use thermognn::graph::{batch_graphs, Graph, GraphBatch};
use thermognn::linalg::{Matrix, RngStream};
use thermognn::model::{cross_entropy, model_forward, ModelSpec, ParamSet};

/// Random connected graph with `n` nodes and `f`-dimensional features.
pub fn random_graph(stream: &mut RngStream, n: usize, f: usize, num_classes: usize) -> Graph {
    let mut feats = Matrix::zeros(n, f);
    for v in feats.as_mut_slice() {
        *v = stream.uniform(-1.0, 1.0);
    }
    let mut edges = Vec::new();
    for i in 1..n {
        let j = (stream.next_u64() as usize) % i;
        edges.push((j, i));
    }
    // a couple of extra edges for denser neighborhoods
    for _ in 0..n / 2 {
        let a = (stream.next_u64() as usize) % n;
        let b = (stream.next_u64() as usize) % n;
        if a != b {
            let e = (a.min(b), a.max(b));
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
    }
    Graph {
        num_nodes: n,
        node_features: feats,
        positions: None,
        edges,
        label: (stream.next_u64() as usize) % num_classes,
    }
}

pub fn random_batch(
    stream: &mut RngStream,
    sizes: &[usize],
    f: usize,
    num_classes: usize,
) -> GraphBatch {
    let graphs: Vec<Graph> = sizes
        .iter()
        .map(|&n| random_graph(stream, n, f, num_classes))
        .collect();
    let refs: Vec<&Graph> = graphs.iter().collect();
    batch_graphs(&refs)
}

pub fn loss_at(spec: &ModelSpec, params: &ParamSet, batch: &GraphBatch) -> f64 {
    let (logits, _) = model_forward(spec, params, batch).unwrap();
    cross_entropy(&logits, &batch.labels).unwrap().0
}

/// Central finite differences over every scalar parameter.
pub fn fd_gradients(spec: &ModelSpec, params: &ParamSet, batch: &GraphBatch, h: f64) -> ParamSet {
    let mut fd = params.zeros_like();
    let mut work = params.clone();
    for li in 0..params.layers.len() {
        for ti in 0..params.layers[li].tensors.len() {
            for k in 0..params.layers[li].tensors[ti].1.len() {
                let orig = params.layers[li].tensors[ti].1.as_slice()[k];
                work.layers[li].tensors[ti].1.as_mut_slice()[k] = orig + h;
                let up = loss_at(spec, &work, batch);
                work.layers[li].tensors[ti].1.as_mut_slice()[k] = orig - h;
                let down = loss_at(spec, &work, batch);
                work.layers[li].tensors[ti].1.as_mut_slice()[k] = orig;
                fd.layers[li].tensors[ti].1.as_mut_slice()[k] = (up - down) / (2.0 * h);
            }
        }
    }
    fd
}

/// Largest relative error between analytic and finite-difference grads.
pub fn max_rel_err(analytic: &ParamSet, fd: &ParamSet) -> f64 {
    let mut worst: f64 = 0.0;
    for (la, lf) in analytic.layers.iter().zip(&fd.layers) {
        for ((_, ma), (_, mf)) in la.tensors.iter().zip(&lf.tensors) {
            for (a, f) in ma.as_slice().iter().zip(mf.as_slice()) {
                let denom = a.abs().max(f.abs()).max(1e-6);
                worst = worst.max((a - f).abs() / denom);
            }
        }
    }
    worst
}
