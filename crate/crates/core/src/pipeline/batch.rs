use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::{run_postprocess, RunOutput};
use super::series::{load_series, SeriesPair};
use crate::error::{Error, Result};
use crate::eval::{evi_summary, mean, median, EviSummary};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub basin_id: String,
}

/// Reads a `path,basin_id` CSV. Relative paths resolve against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new(""));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers != ["path", "basin_id"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `path,basin_id`, found `{}`", headers.join(",")),
        });
    }
    let mut entries = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let p = PathBuf::from(&record[0]);
        entries.push(ManifestEntry {
            path: if p.is_absolute() { p } else { dir.join(p) },
            basin_id: record[1].to_string(),
        });
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinFailure {
    pub basin_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAggregate {
    pub level: f64,
    pub basins: usize,
    /// Mean over basins of each basin's time-averaged log ratio.
    pub mean_of_log_ratio_means: f64,
    pub median_of_log_ratio_means: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_basins: usize,
    pub n_succeeded: usize,
    pub n_failed: usize,
    pub levels: Vec<LevelAggregate>,
    pub gamma_pool_median: f64,
    pub gamma_pool_summary: EviSummary,
    pub failures: Vec<BasinFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    /// Successful basins ordered by id.
    pub results: Vec<(String, RunOutput)>,
    pub summary: BatchSummary,
}

pub fn run_batch(manifest: &[ManifestEntry], cfg: &RunConfig) -> Result<BatchOutput> {
    let inputs: Vec<(String, PathBuf)> = manifest
        .iter()
        .map(|e| (e.basin_id.clone(), e.path.clone()))
        .collect();
    run_batch_with(inputs, cfg, |id, path| load_series(path, id))
}

/// Batch over in-memory series; a loading error counts as that basin's failure.
pub fn run_batch_series(series: Vec<(String, Result<SeriesPair>)>, cfg: &RunConfig) -> Result<BatchOutput> {
    let inputs: Vec<(String, std::sync::Mutex<Option<Result<SeriesPair>>>)> = series
        .into_iter()
        .map(|(id, s)| (id, std::sync::Mutex::new(Some(s))))
        .collect();
    run_batch_with(inputs, cfg, |_, cell| {
        cell.lock()
            .expect("unpoisoned")
            .take()
            .expect("each basin is loaded once")
    })
}

fn run_batch_with<T, F>(mut inputs: Vec<(String, T)>, cfg: &RunConfig, load: F) -> Result<BatchOutput>
where
    T: Send + Sync,
    F: Fn(&str, &T) -> Result<SeriesPair> + Send + Sync,
{
    if inputs.is_empty() {
        return Err(Error::InvalidInput("empty manifest".into()));
    }
    cfg.validate()?;
    inputs.sort_by(|a, b| a.0.cmp(&b.0));
    let mut seen = BTreeSet::new();
    for (id, _) in &inputs {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidInput(format!("basin id `{id}` appears twice")));
        }
    }

    let outcomes: Vec<(String, Result<RunOutput>)> = inputs
        .par_iter()
        .map(|(id, input)| {
            let result = load(id, input)
                .map_err(|e| e.for_basin(id))
                .and_then(|s| run_postprocess(&s, cfg));
            (id.clone(), result)
        })
        .collect();

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(out) => results.push((id, out)),
            Err(e) => failures.push(BasinFailure {
                basin_id: id,
                error: e.to_string(),
            }),
        }
    }
    if results.is_empty() {
        return Err(Error::Batch(
            failures.into_iter().map(|f| (f.basin_id, f.error)).collect(),
        ));
    }
    let summary = summarise(&results, failures, cfg)?;
    Ok(BatchOutput { results, summary })
}

fn summarise(results: &[(String, RunOutput)], failures: Vec<BasinFailure>, cfg: &RunConfig) -> Result<BatchSummary> {
    let mut levels = Vec::new();
    for level in cfg.sorted_levels() {
        let means: Vec<f64> = results
            .iter()
            .filter_map(|(_, out)| {
                out.report
                    .comparisons
                    .iter()
                    .find(|c| c.level == level.value())
                    .map(|c| c.log_ratio_mean)
            })
            .collect();
        if !means.is_empty() {
            levels.push(LevelAggregate {
                level: level.value(),
                basins: means.len(),
                mean_of_log_ratio_means: mean(&means),
                median_of_log_ratio_means: median(&means),
            });
        }
    }
    let gammas: Vec<f64> = results.iter().map(|(_, out)| out.model.gamma_pool).collect();
    let gamma_pool_summary = evi_summary(&gammas)?;
    Ok(BatchSummary {
        n_basins: results.len() + failures.len(),
        n_succeeded: results.len(),
        n_failed: failures.len(),
        levels,
        gamma_pool_median: gamma_pool_summary.median,
        gamma_pool_summary,
        failures,
    })
}
