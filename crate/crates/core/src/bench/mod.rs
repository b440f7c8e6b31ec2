//! Experiment configuration, dataset files, sweeps and plots behind the
//! `dloc` command-line tool.

pub mod config;
pub mod dataset;
pub mod plot;
pub mod sweep;
pub mod train;

pub use config::{DatasetConfig, EstimatorKind, ExperimentConfig, ModelVariant, OutputConfig, PriorBox, SearchConfig};
pub use dataset::{generate_dataset, trial_seed, Dataset, LabeledRecord, TrialGenerator};
pub use plot::render_svg;
pub use sweep::{estimate, rmse, run_sweep, summarize, EstimateOutcome, EstimationContext, SweepResult, SweepRow, TrialLog};
pub use train::{split_dataset, train_from_dataset, TrainingRun};
