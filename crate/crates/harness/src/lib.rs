//! Experiment orchestration: training-set-size sweeps over the fine-tune,
//! PET and SetFit engines, and table emission.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pools;
pub mod sweep;
pub mod table;

pub use config::{BackendSpec, ExperimentConfig, Method};
pub use error::{HarnessError, Result};
pub use pools::{prepare_pools, DataSource, Pools};
pub use sweep::{run_sweep, SweepOutcome, SweepResult};
pub use table::{emit_comparison, emit_table, TableFormat};
