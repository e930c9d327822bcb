//! Rank output rows of a layer by mean squared velocity, zero out the
//! hottest tenth, and report the accuracy change.

use thermognn::experiment::{
    msv_from_log, prune_rows_by_msv, train_to_equilibrium, PruneMode, TrainConfig,
};
use thermognn::graph::synth_dataset;
use thermognn::model::ModelSpec;
use thermognn::optim::{LrSchedule, OptimizerKind};

fn main() -> thermognn::Result<()> {
    let data = synth_dataset(6, 80, 25, 4)?;
    let spec = ModelSpec::gcn_preset(data.feature_dim, data.num_classes);
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Adam,
        schedule: LrSchedule::new(1e-3, 0.1, 10)?,
        epochs: 12,
        batch_size: 16,
        seed: 17,
    };
    let result = train_to_equilibrium(&spec, &data, &cfg)?;

    let msv = msv_from_log(&result.snapshots, "conv3")?;
    let (report, _pruned_params) = prune_rows_by_msv(
        &spec,
        &result.params,
        &msv,
        "conv3",
        0.1,
        PruneMode::Hot,
        &data,
        None,
    )?;
    println!("pruned rows of conv3: {:?}", report.pruned_rows);
    println!(
        "test accuracy: {:.3} -> {:.3}",
        report.accuracy_before, report.accuracy_after
    );
    Ok(())
}
