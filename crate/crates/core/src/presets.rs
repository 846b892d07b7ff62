//! Per-task default hyperparameters used by the CLI and the experiment
//! tests. Every field can be overridden afterwards.

use crate::active::{ActiveConfig, Strategy};
use crate::bears::{EnsembleConfig, Method};
use crate::nesy::{ArchConfig, TrainConfig};
use crate::tasks::TaskSpec;

pub fn ensemble_config(spec: &TaskSpec, method: Method, seed: u64) -> EnsembleConfig {
    let arch = ArchConfig::new(spec.renderer.dim);
    let mut train = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let mut cfg = EnsembleConfig::new(method, arch, train.clone());
    match spec.name.as_str() {
        "mnist_half" | "mnist_even_odd" => {
            train.lr = if method == Method::Sl { 1e-3 } else { 5e-4 };
            train.epochs = 40;
            train.batch_size = 64;
            train.decay = 0.95;
        }
        "traffic_mini" => {
            train.lr = 5e-3;
            train.epochs = 20;
            train.batch_size = 64;
            train.decay = 0.95;
            // one member per optimal red/ped reading
            cfg.ensemble_size = 3;
            cfg.gamma1 = 5.0;
        }
        "kandinsky_mini" => {
            train.lr = 5e-3;
            train.epochs = 40;
            train.batch_size = 16;
            train.decay = 0.95;
            cfg.gamma1 = 0.01;
            cfg.entropy_aid = 0.2;
        }
        _ => {}
    }
    cfg.train = train;
    cfg
}

/// Active-learning defaults: ten initial objects of attribute values all 0
/// (red squares on kandinsky_mini), budget 50 in batches of 10.
pub fn active_config(spec: &TaskSpec, method: Method, strategy: Strategy) -> ActiveConfig {
    ActiveConfig {
        strategy,
        budget: 50,
        batch: 10,
        init_value: vec![0; spec.schema.layout().len()],
        init_count: 10,
        weight: if method == Method::Bears { 10.0 } else { 25.0 },
        cold_start: false,
        init_epochs: 40,
        round_epochs: 10,
    }
}
