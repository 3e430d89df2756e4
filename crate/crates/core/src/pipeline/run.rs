use std::io::{Read, Write};

use chrono::NaiveDate;

use super::config::RunConfig;
use super::series::{SeriesPair, SeriesRow};
use crate::error::{Error, Result};
use crate::eval::{
    evi_summary, exceedance_entry, level_comparison, EvaluationReport, Method, ModelSummary,
};
use crate::evt::hill_estimate;
use crate::model::{fit_extremal, ExtremalQRModel};
use crate::qr::{Dataset, QuantileLevel};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSeries {
    pub method: Method,
    pub level: QuantileLevel,
    pub values: Vec<f64>,
    /// Per-step flag: extremal value served by the conventional fit.
    pub fallback: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub dates: Vec<NaiveDate>,
    pub series: Vec<PredictionSeries>,
}

impl PredictionTable {
    pub fn get(&self, method: Method, level: QuantileLevel) -> Option<&PredictionSeries> {
        self.series
            .iter()
            .find(|s| s.method == method && s.level == level)
    }

    /// Long format, `date,method,level,value`, grouped by method then level.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "method", "level", "value"])?;
        for s in &self.series {
            let level = s.level.to_string();
            for (date, value) in self.dates.iter().zip(&s.values) {
                w.write_record([
                    date.to_string().as_str(),
                    s.method.as_str(),
                    level.as_str(),
                    value.to_string().as_str(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers != ["date", "method", "level", "value"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `date,method,level,value`, found `{}`", headers.join(",")),
            });
        }
        let mut table = PredictionTable {
            dates: Vec::new(),
            series: Vec::new(),
        };
        let mut current: Option<usize> = None;
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::Parse { line, message };
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
                .map_err(|e| bad(format!("bad date `{}`: {e}", &record[0])))?;
            let method: Method = record[1].parse().map_err(|e: Error| bad(e.to_string()))?;
            let level = record[2]
                .parse::<f64>()
                .map_err(|_| bad(format!("bad level `{}`", &record[2])))
                .and_then(|t| QuantileLevel::new(t).map_err(|e| bad(e.to_string())))?;
            let value: f64 = record[3]
                .parse()
                .map_err(|_| bad(format!("bad value `{}`", &record[3])))?;

            let idx = match current {
                Some(i) if table.series[i].method == method && table.series[i].level == level => i,
                _ => {
                    if table.get(method, level).is_some() {
                        return Err(bad(format!("series {} {} is not contiguous", method.as_str(), level)));
                    }
                    table.series.push(PredictionSeries {
                        method,
                        level,
                        values: Vec::new(),
                        fallback: Vec::new(),
                    });
                    table.series.len() - 1
                }
            };
            current = Some(idx);
            let s = &mut table.series[idx];
            let pos = s.values.len();
            if idx == 0 {
                table.dates.push(date);
            } else if table.dates.get(pos) != Some(&date) {
                return Err(bad(format!("date {date} does not align with the first series")));
            }
            s.values.push(value);
            s.fallback.push(false);
        }
        if table.series.iter().any(|s| s.values.len() != table.dates.len()) {
            return Err(Error::InvalidInput("prediction series have different lengths".into()));
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub predictions: PredictionTable,
    pub report: EvaluationReport,
    pub model: ExtremalQRModel,
    /// Training rows used for the fit.
    pub n_train: usize,
}

/// Splits rows into train and test slices. Rows before the train range or
/// between ranges are ignored. Without ranges the first half trains.
pub fn split_rows<'a>(series: &'a SeriesPair, cfg: &RunConfig) -> (Vec<&'a SeriesRow>, Vec<&'a SeriesRow>) {
    match (cfg.train, cfg.test) {
        (Some(train), Some(test)) => (
            series.rows.iter().filter(|r| train.contains(r.date)).collect(),
            series.rows.iter().filter(|r| test.contains(r.date)).collect(),
        ),
        _ => {
            let half = series.rows.len() / 2;
            (
                series.rows[..half].iter().collect(),
                series.rows[half..].iter().collect(),
            )
        }
    }
}

pub fn training_dataset(rows: &[&SeriesRow]) -> Result<Dataset> {
    let x: Vec<f64> = rows.iter().map(|r| r.sim).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.obs).collect();
    Dataset::from_single(&x, &y)
}

/// Fit on the train slice, predict every configured (method, level) over the
/// test slice, and evaluate.
pub fn run_postprocess(series: &SeriesPair, cfg: &RunConfig) -> Result<RunOutput> {
    run_inner(series, cfg).map_err(|e| e.for_basin(&series.basin_id))
}

fn run_inner(series: &SeriesPair, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (train, test) = split_rows(series, cfg);
    if test.is_empty() {
        return Err(Error::InvalidInput("test slice is empty".into()));
    }
    let data = training_dataset(&train)?;
    let model = fit_extremal(&data, cfg.k.into(), cfg.nu, &cfg.sorted_levels())?;
    let predictions = predict_rows(&model, &test, cfg)?;
    let observed: Vec<f64> = test.iter().map(|r| r.obs).collect();
    let sims: Vec<f64> = test.iter().map(|r| r.sim).collect();
    let report = evaluate(&series.basin_id, &observed, &sims, &predictions, Some(&model))?;
    Ok(RunOutput {
        predictions,
        report,
        model,
        n_train: data.n(),
    })
}

pub fn predict_rows(model: &ExtremalQRModel, rows: &[&SeriesRow], cfg: &RunConfig) -> Result<PredictionTable> {
    let levels = cfg.sorted_levels();
    let mut series = Vec::new();
    for method in [Method::Conventional, Method::Extremal] {
        if !cfg.has(method) {
            continue;
        }
        for &level in &levels {
            let mut values = Vec::with_capacity(rows.len());
            let mut fallback = Vec::with_capacity(rows.len());
            for row in rows {
                let x = [row.sim];
                let (v, f) = match method {
                    Method::Conventional => {
                        let fit = model
                            .conventional_fit(level)
                            .ok_or(Error::NoFallback { tau: level.value() })?;
                        (fit.predict(&x)?, false)
                    }
                    Method::Extremal => {
                        let p = model.predict_or_conventional(&x, level)?;
                        (p.value, p.fallback)
                    }
                };
                values.push(v);
                fallback.push(f);
            }
            series.push(PredictionSeries {
                method,
                level,
                values,
                fallback,
            });
        }
    }
    Ok(PredictionTable {
        dates: rows.iter().map(|r| r.date).collect(),
        series,
    })
}

/// Exceedance per series, extremal-vs-conventional log ratios per level, and
/// the spread of per-point tail indices over the test covariates.
pub fn evaluate(
    basin_id: &str,
    observed: &[f64],
    sims: &[f64],
    predictions: &PredictionTable,
    model: Option<&ExtremalQRModel>,
) -> Result<EvaluationReport> {
    let mut exceedance = Vec::new();
    for s in &predictions.series {
        let fallbacks = s.fallback.iter().filter(|&&f| f).count();
        exceedance.push(exceedance_entry(s.method, s.level, observed, &s.values, fallbacks)?);
    }
    let mut comparisons = Vec::new();
    for s in predictions.series.iter().filter(|s| s.method == Method::Extremal) {
        if let Some(conv) = predictions.get(Method::Conventional, s.level) {
            comparisons.push(level_comparison(s.level, &s.values, &conv.values)?);
        }
    }
    let evi = match model {
        Some(m) => {
            let gammas = sims
                .iter()
                .map(|&x| m.quantile_path(&[x]).and_then(|p| hill_estimate(&p, &m.cfg)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .filter_map(|e| e.gamma)
                .collect::<Vec<_>>();
            (!gammas.is_empty()).then(|| evi_summary(&gammas)).transpose()?
        }
        None => None,
    };
    Ok(EvaluationReport {
        basin_id: basin_id.to_string(),
        model: model.map(ModelSummary::from),
        exceedance,
        comparisons,
        evi_summary: evi,
    })
}
