//! Train the GCN preset on a small synthetic dataset and print the
//! per-epoch training log.

use thermognn::experiment::{train_to_equilibrium, TrainConfig};
use thermognn::graph::synth_dataset;
use thermognn::model::ModelSpec;
use thermognn::optim::{LrSchedule, OptimizerKind};

fn main() -> thermognn::Result<()> {
    let data = synth_dataset(1, 100, 30, 5)?;
    let spec = ModelSpec::gcn_preset(data.feature_dim, data.num_classes);
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Adam,
        schedule: LrSchedule::new(1e-3, 0.1, 10)?,
        epochs: 15,
        batch_size: 16,
        seed: 7,
    };
    let result = train_to_equilibrium(&spec, &data, &cfg)?;
    println!("epoch  eta       loss    train_acc  test_acc");
    for s in &result.log {
        println!(
            "{:5}  {:.1e}  {:.4}  {:9.3}  {:8.3}",
            s.epoch, s.eta, s.loss, s.train_acc, s.test_acc
        );
    }
    println!("{} snapshots recorded", result.snapshots.len());
    Ok(())
}
