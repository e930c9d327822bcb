//! Train the two-head GAT preset for a few epochs.

use thermognn::experiment::{train_to_equilibrium, TrainConfig};
use thermognn::graph::synth_dataset;
use thermognn::model::ModelSpec;
use thermognn::optim::{LrSchedule, OptimizerKind};

fn main() -> thermognn::Result<()> {
    let data = synth_dataset(2, 60, 25, 4)?;
    let spec = ModelSpec::gat_preset(data.feature_dim, data.num_classes);
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Adam,
        schedule: LrSchedule::new(1e-3, 0.1, 10)?,
        epochs: 8,
        batch_size: 16,
        seed: 3,
    };
    let result = train_to_equilibrium(&spec, &data, &cfg)?;
    for s in &result.log {
        println!(
            "epoch {:2}: loss {:.4}, train acc {:.3}, test acc {:.3}",
            s.epoch, s.loss, s.train_acc, s.test_acc
        );
    }
    Ok(())
}
