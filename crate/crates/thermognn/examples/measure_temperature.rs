//! Train to a rough equilibrium, then continue at constant learning rate
//! and read out each layer's temperature over the window.

use thermognn::experiment::{measure_window, train_to_equilibrium, MeasureSpec, TrainConfig};
use thermognn::graph::synth_dataset;
use thermognn::model::ModelSpec;
use thermognn::optim::{LrSchedule, OptimizerKind};
use thermognn::thermo::TemperatureConfig;

fn main() -> thermognn::Result<()> {
    let data = synth_dataset(5, 80, 25, 4)?;
    let spec = ModelSpec::gcn_preset(data.feature_dim, data.num_classes);
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Adam,
        schedule: LrSchedule::new(1e-3, 0.1, 5)?,
        epochs: 10,
        batch_size: 16,
        seed: 11,
    };
    let eq = train_to_equilibrium(&spec, &data, &cfg)?;

    let ms = MeasureSpec {
        eta: 1e-3,
        batch_size: 16,
        window_epochs: 10,
        optimizer: OptimizerKind::Sgd,
        seed: 11,
    };
    let (series, _) = measure_window(&spec, &eq.params, &data, &ms, &TemperatureConfig::default())?;
    println!("layer   dof     T (window mean)");
    for ts in &series {
        println!("{:7} {:6}  {:e}", ts.layer_name, ts.dof, ts.thermodynamic);
    }
    Ok(())
}
