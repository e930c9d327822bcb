//! Per-weight mean-squared-velocity map for one layer: which output rows
//! run hot and which run cold over a training window.

use thermognn::experiment::{msv_from_log, train_to_equilibrium, TrainConfig};
use thermognn::graph::synth_dataset;
use thermognn::model::ModelSpec;
use thermognn::optim::{LrSchedule, OptimizerKind};

fn main() -> thermognn::Result<()> {
    let data = synth_dataset(4, 60, 25, 4)?;
    let spec = ModelSpec::gcn_preset(data.feature_dim, data.num_classes);
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Adam,
        schedule: LrSchedule::new(1e-3, 0.1, 10)?,
        epochs: 10,
        batch_size: 16,
        seed: 13,
    };
    let result = train_to_equilibrium(&spec, &data, &cfg)?;

    let map = msv_from_log(&result.snapshots, "conv2")?;
    println!("MSV map for conv2: {}x{}", map.msv.rows(), map.msv.cols());

    let mut order: Vec<usize> = (0..map.row_means.len()).collect();
    order.sort_by(|&a, &b| map.row_means[a].partial_cmp(&map.row_means[b]).unwrap());
    println!("coldest rows: {:?}", &order[..3]);
    println!("hottest rows: {:?}", &order[order.len() - 3..]);
    for &i in order.iter().take(3).chain(order.iter().rev().take(3)) {
        println!("row {:2}: mean squared velocity {:e}", i, map.row_means[i]);
    }
    Ok(())
}
