//! Generate a small synthetic dataset, save it as JSONL, and load it back.

use thermognn::graph::{load_jsonl, save_jsonl, synth_dataset};

fn main() -> thermognn::Result<()> {
    let ds = synth_dataset(42, 100, 30, 10)?;
    println!(
        "{} train / {} test graphs, {} classes, feature dim {}",
        ds.train.len(),
        ds.test.len(),
        ds.num_classes,
        ds.feature_dim
    );
    let g = &ds.train[0];
    println!(
        "first graph: {} nodes, {} edges, label {}",
        g.num_nodes,
        g.edges.len(),
        g.label
    );

    let dir = std::env::temp_dir().join("thermognn_synth_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("dataset.jsonl");
    save_jsonl(&ds, &path)?;
    let back = load_jsonl(&path)?;
    assert_eq!(back.train.len(), ds.train.len());
    println!("round-tripped through {}", path.display());
    Ok(())
}
