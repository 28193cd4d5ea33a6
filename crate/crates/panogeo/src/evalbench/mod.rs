//! Synthetic benchmark, retrieval metrics and experiment reports.

pub mod experiment;
pub mod metrics;
pub mod outliers;
pub mod report;
pub mod synth;

pub use experiment::{run_experiment, EvalQuery, EvalReport, ExperimentOptions, IndexConfig, QueryMode};
pub use metrics::{median, positioning_error, recall_at_n, DEFAULT_RADIUS};
pub use synth::{synth_dataset, QueryPlacement, SynthConfig, SynthDataset, SynthQuery};
