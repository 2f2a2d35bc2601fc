//! Experiment plumbing: metrics, configuration, SNR sweeps and scatter dumps.

pub mod config;
pub mod metrics;
pub mod sweep;

pub use config::ExperimentConfig;
pub use metrics::{mse, ser};
pub use sweep::{
    emit_scatter, run_sweep, write_scatter_csv, write_sweep_csv, Mode, ScatterRow, SweepRecord,
    SCATTER_HEADER, SWEEP_HEADER,
};
