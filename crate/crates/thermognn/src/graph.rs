//! Graph containers, JSONL dataset ingestion, a seeded synthetic
//! superpixel-like generator, and minibatching.
//!
//! JSONL format, one graph per line:
//! `{"label": int, "split": "train"|"test", "features": [[f64,...],...],
//!   "pos": [[f64,f64],...] (optional), "edges": [[int,int],...]}`
//! Edges are undirected and listed once; the loader validates and mirrors
//! them at batch time.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngStream};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// One graph: node features, undirected edges (each stored once), class label.
#[derive(Debug, Clone)]
pub struct Graph {
    pub num_nodes: usize,
    pub node_features: Matrix,
    pub positions: Option<Matrix>,
    pub edges: Vec<(usize, usize)>,
    pub label: usize,
}

/// Disjoint union of graphs for one minibatch. Edges are directed: each
/// undirected edge appears both ways. `node_to_graph` maps node row to
/// graph index within the batch.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub node_features: Matrix,
    pub edges: Vec<(usize, usize)>,
    pub node_to_graph: Vec<usize>,
    pub labels: Vec<usize>,
    pub size: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Graph>,
    pub test: Vec<Graph>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    label: usize,
    split: String,
    features: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pos: Option<Vec<[f64; 2]>>,
    edges: Vec<[usize; 2]>,
}

fn graph_from_record(rec: GraphRecord, line_no: usize) -> Result<Graph> {
    let n = rec.features.len();
    if n == 0 {
        return Err(Error::data(format!("line {line_no}: graph has no nodes")));
    }
    let f = rec.features[0].len();
    for (i, row) in rec.features.iter().enumerate() {
        if row.len() != f {
            return Err(Error::data(format!(
                "line {line_no}: feature row {i} has length {} != {f}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "line {line_no}: non-finite feature in node {i}"
            )));
        }
    }
    let mut seen = BTreeSet::new();
    let mut edges = Vec::with_capacity(rec.edges.len());
    for &[a, b] in &rec.edges {
        if a >= n || b >= n {
            return Err(Error::data(format!(
                "line {line_no}: edge [{a},{b}] out of range for {n} nodes"
            )));
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            edges.push(key);
        }
    }
    let positions = match rec.pos {
        Some(p) => {
            if p.len() != n {
                return Err(Error::data(format!(
                    "line {line_no}: pos length {} != node count {n}",
                    p.len()
                )));
            }
            Some(Matrix::from_rows(
                &p.iter().map(|xy| xy.to_vec()).collect::<Vec<_>>(),
            ))
        }
        None => None,
    };
    Ok(Graph {
        num_nodes: n,
        node_features: Matrix::from_rows(&rec.features),
        positions,
        edges,
        label: rec.label,
    })
}

/// Load a JSONL dataset; the per-graph "split" field assigns train/test.
pub fn load_jsonl(path: &Path) -> Result<DatasetSplit> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut num_classes = 0usize;
    let mut feature_dim: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("line {line_no}: malformed graph object: {e}")))?;
        let split = rec.split.clone();
        let g = graph_from_record(rec, line_no)?;
        num_classes = num_classes.max(g.label + 1);
        match feature_dim {
            None => feature_dim = Some(g.node_features.cols()),
            Some(f) if f != g.node_features.cols() => {
                return Err(Error::data(format!(
                    "line {line_no}: feature dim {} differs from {f}",
                    g.node_features.cols()
                )))
            }
            _ => {}
        }
        match split.as_str() {
            "train" => train.push(g),
            "test" => test.push(g),
            other => {
                return Err(Error::data(format!(
                    "line {line_no}: split must be \"train\" or \"test\", got {other:?}"
                )))
            }
        }
    }
    if train.is_empty() && test.is_empty() {
        return Err(Error::data("dataset is empty".to_string()));
    }
    Ok(DatasetSplit {
        train,
        test,
        num_classes,
        feature_dim: feature_dim.unwrap_or(0),
    })
}

/// Write a dataset back out in the JSONL format read by [`load_jsonl`].
pub fn save_jsonl(ds: &DatasetSplit, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let mut dump = |graphs: &[Graph], split: &str| -> Result<()> {
        for g in graphs {
            let rec = GraphRecord {
                label: g.label,
                split: split.to_string(),
                features: (0..g.num_nodes).map(|i| g.node_features.row(i).to_vec()).collect(),
                pos: g.positions.as_ref().map(|p| {
                    (0..g.num_nodes).map(|i| [p.get(i, 0), p.get(i, 1)]).collect()
                }),
                edges: g.edges.iter().map(|&(a, b)| [a, b]).collect(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    };
    dump(&ds.train, "train")?;
    dump(&ds.test, "test")?;
    w.flush()?;
    Ok(())
}

/// Class-specific intensity motif: a Gaussian bump centered at one of C
/// fixed anchor points in [0,1]^2.
fn motif_intensity(class: usize, num_classes: usize, x: f64, y: f64) -> f64 {
    let angle = std::f64::consts::TAU * class as f64 / num_classes as f64;
    let cx = 0.5 + 0.32 * angle.cos();
    let cy = 0.5 + 0.32 * angle.sin();
    let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
    (-d2 / (2.0 * 0.15 * 0.15)).exp()
}

fn knn_edges(pos: &Matrix, k: usize) -> Vec<(usize, usize)> {
    let n = pos.rows();
    let mut seen = BTreeSet::new();
    for i in 0..n {
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dx = pos.get(i, 0) - pos.get(j, 0);
                let dy = pos.get(i, 1) - pos.get(j, 1);
                (dx * dx + dy * dy, j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in dists.iter().take(k.min(dists.len())) {
            seen.insert((i.min(j), i.max(j)));
        }
    }
    seen.into_iter().collect()
}

/// Deterministic synthetic dataset: k-NN geometric graphs over random
/// positions, each class planting its intensity motif. Node features are
/// [intensity, x, y]. Split 80/20 per class.
pub fn synth_dataset(
    seed: u64,
    n_graphs: usize,
    nodes_per_graph: usize,
    num_classes: usize,
) -> Result<DatasetSplit> {
    if n_graphs < num_classes {
        return Err(Error::config(format!(
            "need at least {num_classes} graphs for {num_classes} classes, got {n_graphs}"
        )));
    }
    let root = RngStream::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for g_idx in 0..n_graphs {
        let class = g_idx % num_classes;
        let mut stream = root.substream(g_idx as u64);
        let mut pos = Matrix::zeros(nodes_per_graph, 2);
        for i in 0..nodes_per_graph {
            pos.set(i, 0, stream.next_f64());
            pos.set(i, 1, stream.next_f64());
        }
        let mut feats = Matrix::zeros(nodes_per_graph, 3);
        for i in 0..nodes_per_graph {
            let (x, y) = (pos.get(i, 0), pos.get(i, 1));
            let noise = 0.05 * stream.normal();
            feats.set(i, 0, motif_intensity(class, num_classes, x, y) + noise);
            feats.set(i, 1, x);
            feats.set(i, 2, y);
        }
        let edges = knn_edges(&pos, 6);
        let g = Graph {
            num_nodes: nodes_per_graph,
            node_features: feats,
            positions: Some(pos),
            edges,
            label: class,
        };
        // Per-class 80/20: every 5th graph of a class goes to test.
        if (g_idx / num_classes) % 5 == 4 {
            test.push(g);
        } else {
            train.push(g);
        }
    }
    Ok(DatasetSplit {
        train,
        test,
        num_classes,
        feature_dim: 3,
    })
}

/// Partition `graphs` into batches of size `batch_size` (last may be
/// smaller). Every graph appears exactly once. Each undirected edge is
/// emitted in both directions with node indices offset per graph.
pub fn make_batches(
    graphs: &[Graph],
    batch_size: usize,
    stream: &mut RngStream,
    shuffle: bool,
) -> Result<Vec<GraphBatch>> {
    if graphs.is_empty() {
        return Err(Error::config("cannot batch an empty graph list".to_string()));
    }
    assert!(batch_size >= 1);
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    if shuffle {
        stream.shuffle(&mut order);
    }
    let mut batches = Vec::new();
    for chunk in order.chunks(batch_size) {
        let members: Vec<&Graph> = chunk.iter().map(|&i| &graphs[i]).collect();
        batches.push(batch_graphs(&members));
    }
    Ok(batches)
}

/// Build one batch as the disjoint union of `graphs`.
pub fn batch_graphs(graphs: &[&Graph]) -> GraphBatch {
    let total_nodes: usize = graphs.iter().map(|g| g.num_nodes).sum();
    let feat_dim = graphs[0].node_features.cols();
    let mut feats = Matrix::zeros(total_nodes, feat_dim);
    let mut edges = Vec::new();
    let mut node_to_graph = Vec::with_capacity(total_nodes);
    let mut labels = Vec::with_capacity(graphs.len());
    let mut offset = 0;
    for (gi, g) in graphs.iter().enumerate() {
        for i in 0..g.num_nodes {
            feats.row_mut(offset + i).copy_from_slice(g.node_features.row(i));
            node_to_graph.push(gi);
        }
        for &(a, b) in &g.edges {
            edges.push((offset + a, offset + b));
            if a != b {
                edges.push((offset + b, offset + a));
            }
        }
        labels.push(g.label);
        offset += g.num_nodes;
    }
    GraphBatch {
        node_features: feats,
        edges,
        node_to_graph,
        labels,
        size: graphs.len(),
    }
}

/// Add one (i,i) per node if absent. Idempotent.
pub fn add_self_loops(edges: &[(usize, usize)], num_nodes: usize) -> Vec<(usize, usize)> {
    let mut out = edges.to_vec();
    let mut has_loop = vec![false; num_nodes];
    for &(a, b) in edges {
        if a == b {
            has_loop[a] = true;
        }
    }
    for (i, present) in has_loop.iter().enumerate() {
        if !present {
            out.push((i, i));
        }
    }
    out
}

/// Symmetric normalization coefficients: edge (i,j) weighted
/// 1/sqrt(d_i * d_j), degrees counting the self-loop.
pub fn sym_norm_coeffs(edges_with_loops: &[(usize, usize)], num_nodes: usize) -> Vec<f64> {
    let mut deg = vec![0usize; num_nodes];
    for &(_, dst) in edges_with_loops {
        deg[dst] += 1;
    }
    edges_with_loops
        .iter()
        .map(|&(src, dst)| 1.0 / ((deg[src] * deg[dst]) as f64).sqrt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_file(contents: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), contents).unwrap();
        f
    }

    #[test]
    fn load_two_lines() {
        let f = tmp_file(concat!(
            r#"{"label":0,"split":"train","features":[[1.0],[2.0]],"edges":[[0,1]]}"#,
            "\n",
            r#"{"label":1,"split":"test","features":[[3.0]],"edges":[]}"#,
            "\n"
        ));
        let ds = load_jsonl(f.path()).unwrap();
        assert_eq!(ds.train.len(), 1);
        assert_eq!(ds.test.len(), 1);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.feature_dim, 1);
    }

    #[test]
    fn load_self_loop_stored_once() {
        let feats: Vec<String> = (0..75).map(|_| "[0.0]".to_string()).collect();
        let line = format!(
            r#"{{"label":0,"split":"train","features":[{}],"edges":[[5,5],[5,5]]}}"#,
            feats.join(",")
        );
        let f = tmp_file(&line);
        let ds = load_jsonl(f.path()).unwrap();
        assert_eq!(ds.train[0].edges, vec![(5, 5)]);
    }

    #[test]
    fn load_edge_out_of_range() {
        let feats: Vec<String> = (0..75).map(|_| "[0.0]".to_string()).collect();
        let line = format!(
            r#"{{"label":0,"split":"train","features":[{}],"edges":[[80,1]]}}"#,
            feats.join(",")
        );
        let f = tmp_file(&line);
        let err = load_jsonl(f.path()).unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn load_malformed_names_line() {
        let f = tmp_file("{\"label\":0,\"split\":\"train\",\"features\":[[0.0]],\"edges\":[]}\nnot json\n");
        let err = load_jsonl(f.path()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn jsonl_round_trip() {
        let ds = synth_dataset(11, 20, 10, 4).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_jsonl(&ds, f.path()).unwrap();
        let back = load_jsonl(f.path()).unwrap();
        assert_eq!(back.train.len(), ds.train.len());
        assert_eq!(back.test.len(), ds.test.len());
        assert_eq!(back.num_classes, ds.num_classes);
        assert_eq!(back.train[0].node_features, ds.train[0].node_features);
        assert_eq!(back.train[0].edges, ds.train[0].edges);
    }

    #[test]
    fn synth_deterministic() {
        let a = synth_dataset(3, 30, 20, 10).unwrap();
        let b = synth_dataset(3, 30, 20, 10).unwrap();
        assert_eq!(a.train[0].node_features, b.train[0].node_features);
        assert_eq!(a.train[5].edges, b.train[5].edges);
    }

    #[test]
    fn synth_stratified() {
        let ds = synth_dataset(1, 100, 10, 10).unwrap();
        let mut counts = vec![0usize; 10];
        for g in ds.train.iter().chain(&ds.test) {
            counts[g.label] += 1;
        }
        assert!(counts.iter().all(|&c| c == 10), "counts {counts:?}");
        // 80/20 per class
        assert_eq!(ds.train.len(), 80);
        assert_eq!(ds.test.len(), 20);
    }

    /// Brute-force 1-NN over graph descriptors (grid-averaged intensity):
    /// the planted motifs must be separable well above chance.
    #[test]
    fn synth_one_nn_oracle() {
        let ds = synth_dataset(5, 100, 75, 10).unwrap();
        let descriptor = |g: &Graph| -> Vec<f64> {
            let mut sums = vec![0.0; 16];
            let mut counts = vec![0.0; 16];
            for i in 0..g.num_nodes {
                let x = g.node_features.get(i, 1).min(0.999);
                let y = g.node_features.get(i, 2).min(0.999);
                let cell = (x * 4.0) as usize * 4 + (y * 4.0) as usize;
                sums[cell] += g.node_features.get(i, 0);
                counts[cell] += 1.0;
            }
            sums.iter().zip(&counts).map(|(s, c)| if *c > 0.0 { s / c } else { 0.0 }).collect()
        };
        let train: Vec<(Vec<f64>, usize)> =
            ds.train.iter().map(|g| (descriptor(g), g.label)).collect();
        let mut correct = 0;
        for g in &ds.test {
            let d = descriptor(g);
            let best = train
                .iter()
                .min_by(|a, b| {
                    let da: f64 = a.0.iter().zip(&d).map(|(x, y)| (x - y) * (x - y)).sum();
                    let db: f64 = b.0.iter().zip(&d).map(|(x, y)| (x - y) * (x - y)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best.1 == g.label {
                correct += 1;
            }
        }
        let acc = correct as f64 / ds.test.len() as f64;
        assert!(acc >= 0.3, "1-NN accuracy {acc} below 3x chance");
    }

    #[test]
    fn batch_sizes() {
        let ds = synth_dataset(2, 10, 5, 2).unwrap();
        let all: Vec<Graph> = ds.train.iter().chain(&ds.test).cloned().collect();
        let mut s = RngStream::new(0);
        let batches = make_batches(&all, 4, &mut s, false).unwrap();
        let sizes: Vec<usize> = batches.iter().map(|b| b.size).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn batch_order_preserved_without_shuffle() {
        let ds = synth_dataset(2, 10, 5, 2).unwrap();
        let mut s = RngStream::new(0);
        let batches = make_batches(&ds.train, 3, &mut s, false).unwrap();
        let labels: Vec<usize> = batches.iter().flat_map(|b| b.labels.clone()).collect();
        let expect: Vec<usize> = ds.train.iter().map(|g| g.label).collect();
        assert_eq!(labels, expect);
    }

    #[test]
    fn batch_node_to_graph_offsets() {
        let g1 = Graph {
            num_nodes: 3,
            node_features: Matrix::zeros(3, 1),
            positions: None,
            edges: vec![(0, 1)],
            label: 0,
        };
        let g2 = Graph {
            num_nodes: 2,
            node_features: Matrix::zeros(2, 1),
            positions: None,
            edges: vec![(0, 1)],
            label: 1,
        };
        let b = batch_graphs(&[&g1, &g2]);
        assert_eq!(b.node_to_graph, vec![0, 0, 0, 1, 1]);
        assert!(b.edges.contains(&(3, 4)) && b.edges.contains(&(4, 3)));
    }

    #[test]
    fn self_loops_basic_and_idempotent() {
        let e = add_self_loops(&[], 3);
        assert_eq!(e, vec![(0, 0), (1, 1), (2, 2)]);
        let e2 = add_self_loops(&[(1, 1), (0, 1)], 2);
        assert_eq!(e2.iter().filter(|&&p| p == (1, 1)).count(), 1);
        let twice = add_self_loops(&e, 3);
        assert_eq!(twice.len(), e.len());
    }

    #[test]
    fn sym_norm_single_node() {
        let e = add_self_loops(&[], 1);
        assert_eq!(sym_norm_coeffs(&e, 1), vec![1.0]);
    }

    #[test]
    fn sym_norm_two_node_path() {
        // edges both ways plus loops; every endpoint has degree 2
        let edges = vec![(0, 1), (1, 0), (0, 0), (1, 1)];
        let coeffs = sym_norm_coeffs(&edges, 2);
        for c in coeffs {
            assert!((c - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn sym_norm_star_matches_dense_oracle() {
        // star with center 0 and 4 leaves
        let n = 5;
        let mut undirected = vec![(0usize, 0usize); 0];
        for leaf in 1..n {
            undirected.push((0, leaf));
        }
        let mut directed: Vec<(usize, usize)> = Vec::new();
        for &(a, b) in &undirected {
            directed.push((a, b));
            directed.push((b, a));
        }
        let with_loops = add_self_loops(&directed, n);
        let coeffs = sym_norm_coeffs(&with_loops, n);

        // dense oracle: D^{-1/2} (A+I) D^{-1/2}
        let mut a = Matrix::identity(n);
        for &(u, v) in &undirected {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        let mut deg = vec![0.0; n];
        for i in 0..n {
            deg[i] = (0..n).map(|j| a.get(i, j)).sum();
        }
        let mut dense = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                dense.set(i, j, a.get(i, j) / (deg[i] * deg[j]).sqrt());
            }
        }
        let mut sparse = Matrix::zeros(n, n);
        for (&(src, dst), &c) in with_loops.iter().zip(&coeffs) {
            sparse.set(dst, src, c);
        }
        for i in 0..n {
            for j in 0..n {
                assert!((dense.get(i, j) - sparse.get(i, j)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sym_norm_symmetric() {
        let ds = synth_dataset(8, 4, 12, 2).unwrap();
        let b = batch_graphs(&[&ds.train[0]]);
        let with_loops = add_self_loops(&b.edges, b.node_to_graph.len());
        let coeffs = sym_norm_coeffs(&with_loops, b.node_to_graph.len());
        for (i, &(a, bb)) in with_loops.iter().enumerate() {
            let rev = with_loops.iter().position(|&(x, y)| (x, y) == (bb, a)).unwrap();
            assert_eq!(coeffs[i], coeffs[rev]);
        }
    }

    #[test]
    fn empty_graph_list_errors() {
        let mut s = RngStream::new(0);
        assert!(make_batches(&[], 4, &mut s, false).is_err());
    }
}
