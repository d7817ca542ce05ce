//! Training runs end to end: configuration and presets, the training loop,
//! evaluation, checkpoints and parameter sweeps.

pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod sweep;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{preset, preset_names, DatasetKind, Expected, PhaseOrder, Preset, RunConfig};
pub use metrics::{csv_header, table_row, EpochMetrics, TABLE_HEADER};
pub use sweep::{sweep, SweepParam, SweepRow};
pub use train::{evaluate, load_dataset, sparsity, train, EvalReport, Trainer};
