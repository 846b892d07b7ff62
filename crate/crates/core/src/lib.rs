pub mod distribution;
pub mod knowledge;
pub mod seed;
pub mod nn;
pub mod nesy;
pub mod tasks;
pub mod bears;
pub mod metrics;
pub mod rs;
pub mod active;
pub mod presets;
pub mod cli;
