//! Sweep the learning rate from a shared equilibrium checkpoint and show
//! how each layer's temperature scales with eta.

use thermognn::experiment::{
    sweep, train_to_equilibrium, SweepSpec, SweepVar, TrainConfig,
};
use thermognn::graph::synth_dataset;
use thermognn::model::ModelSpec;
use thermognn::optim::{LrSchedule, OptimizerKind};
use thermognn::thermo::TemperatureConfig;

fn main() -> thermognn::Result<()> {
    let data = synth_dataset(8, 80, 25, 4)?;
    let spec = ModelSpec::gcn_preset(data.feature_dim, data.num_classes);
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Adam,
        schedule: LrSchedule::new(1e-3, 0.1, 5)?,
        epochs: 10,
        batch_size: 16,
        seed: 21,
    };
    let eq = train_to_equilibrium(&spec, &data, &cfg)?;

    let sw = SweepSpec {
        varied: SweepVar::Eta,
        values: vec![7e-4, 1.5e-3, 3e-3],
        fixed_eta: 1e-3,
        fixed_beta: 16,
        window_epochs: 8,
        optimizer: OptimizerKind::Sgd,
        seed: 21,
    };
    let result = sweep(&spec, &eq.params, &data, &sw, &TemperatureConfig::default())?;
    println!("eta       zeta       layer    T");
    for r in &result.rows {
        println!("{:.1e}  {:.3e}  {:7}  {:e}", r.value, r.zeta, r.layer, r.temperature);
    }
    Ok(())
}
