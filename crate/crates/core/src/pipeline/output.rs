use std::fs;
use std::path::Path;

use super::batch::BatchOutput;
use super::plot::{evi_histogram_svg, series_svg};
use super::run::RunOutput;
use crate::error::Result;
use crate::eval::{EvaluationReport, Method};
use crate::model::serialize_model;

fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

pub fn write_report(dir: &Path, report: &EvaluationReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), to_json(report))?;

    let mut w = csv::Writer::from_path(dir.join("exceedance.csv"))?;
    w.write_record([
        "method",
        "level",
        "n_test",
        "exceedance_count",
        "exceedance_rate",
        "nominal_rate",
        "fallback_count",
    ])?;
    for e in &report.exceedance {
        w.write_record([
            e.method.as_str().to_string(),
            e.level.to_string(),
            e.n_test.to_string(),
            e.exceedance_count.to_string(),
            e.exceedance_rate.to_string(),
            e.nominal_rate.to_string(),
            e.fallback_count.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("log_ratios.csv"))?;
    w.write_record(["level", "log_ratio_mean", "log_ratio_median", "dropped"])?;
    for c in &report.comparisons {
        w.write_record([
            c.level.to_string(),
            c.log_ratio_mean.to_string(),
            c.log_ratio_median.to_string(),
            c.dropped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `model.json`, `predictions.csv`, `report.json`, `exceedance.csv`,
/// `log_ratios.csv`, and with `plots` an EVI histogram plus one chart per level.
pub fn write_run(dir: &Path, out: &RunOutput, observed: &[f64], plots: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("model.json"), serialize_model(&out.model))?;
    out.predictions
        .write_csv(fs::File::create(dir.join("predictions.csv"))?)?;
    write_report(dir, &out.report)?;
    if plots {
        if let Some(summary) = &out.report.evi_summary {
            fs::write(
                dir.join("evi_histogram.svg"),
                evi_histogram_svg(summary, &format!("{}: per-point EVI", out.report.basin_id)),
            )?;
        }
        let mut levels: Vec<_> = out.predictions.series.iter().map(|s| s.level).collect();
        levels.dedup();
        for level in levels {
            let mut lines: Vec<(&str, &[f64])> = vec![("observed", observed)];
            for method in [Method::Conventional, Method::Extremal] {
                if let Some(s) = out.predictions.get(method, level) {
                    lines.push((method.as_str(), &s.values));
                }
            }
            fs::write(
                dir.join(format!("series_{level}.svg")),
                series_svg(&format!("{} at level {level}", out.report.basin_id), &lines),
            )?;
        }
    }
    Ok(())
}

/// One sub-directory per basin plus `summary.json` and `basins.csv`.
pub fn write_batch(dir: &Path, out: &BatchOutput, plots: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (id, run) in &out.results {
        write_run(&dir.join(sanitize(id)), run, &[], false)?;
    }
    fs::write(dir.join("summary.json"), to_json(&out.summary))?;

    let mut w = csv::Writer::from_path(dir.join("basins.csv"))?;
    w.write_record(["basin_id", "status", "k", "gamma_pool", "tau_base", "error"])?;
    for (id, run) in &out.results {
        w.write_record([
            id.clone(),
            "ok".into(),
            run.model.cfg.k.to_string(),
            run.model.gamma_pool.to_string(),
            run.model.tau_base().to_string(),
            String::new(),
        ])?;
    }
    for f in &out.summary.failures {
        w.write_record([
            f.basin_id.clone(),
            "failed".into(),
            String::new(),
            String::new(),
            String::new(),
            f.error.clone(),
        ])?;
    }
    w.flush()?;

    if plots {
        fs::write(
            dir.join("gamma_pool_histogram.svg"),
            evi_histogram_svg(&out.summary.gamma_pool_summary, "pooled EVI across basins"),
        )?;
    }
    Ok(())
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}
