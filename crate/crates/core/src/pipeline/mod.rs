//! Ingestion, train/test workflow over one or many basins, and report output.

mod batch;
mod config;
mod output;
pub mod plot;
mod run;
mod series;

pub use batch::{
    read_manifest, run_batch, run_batch_series, BasinFailure, BatchOutput, BatchSummary,
    LevelAggregate, ManifestEntry,
};
pub use config::{parse_levels, parse_methods, DateRange, KSetting, RunConfig};
pub use output::{write_batch, write_report, write_run};
pub use run::{
    evaluate, predict_rows, run_postprocess, split_rows, training_dataset, PredictionSeries,
    PredictionTable, RunOutput,
};
pub use series::{load_series, read_series, write_series, SeriesPair, SeriesRow};
