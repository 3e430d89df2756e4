use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// One day of observed and simulated flow (mm/day).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub date: NaiveDate,
    pub obs: f64,
    pub sim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPair {
    pub basin_id: String,
    pub rows: Vec<SeriesRow>,
    pub dropped_rows: usize,
}

pub fn load_series(path: impl AsRef<Path>, basin_id: &str) -> Result<SeriesPair> {
    let file = std::fs::File::open(path.as_ref())?;
    read_series(file, basin_id)
}

/// Parses `date,obs,sim` CSV. Rows with an empty or non-finite value are
/// dropped and counted; malformed dates, numbers or ordering are errors.
pub fn read_series(reader: impl Read, basin_id: &str) -> Result<SeriesPair> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != ["date", "obs", "sim"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `date,obs,sim`, found `{}`", names.join(",")),
        });
    }

    let mut rows: Vec<SeriesRow> = Vec::new();
    let mut dropped = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            message: format!("bad date `{}`: {e}", &record[0]),
        })?;
        if let Some(prev) = rows.last() {
            if date == prev.date {
                return Err(Error::DuplicateDate(date.to_string()));
            }
            if date < prev.date {
                return Err(Error::Parse {
                    line,
                    message: format!("date {date} is earlier than the preceding {}", prev.date),
                });
            }
        }
        let obs = parse_value(&record[1], line, "obs")?;
        let sim = parse_value(&record[2], line, "sim")?;
        match (obs, sim) {
            (Some(obs), Some(sim)) => {
                if obs < 0.0 {
                    return Err(Error::Parse {
                        line,
                        message: format!("negative observed flow {obs}"),
                    });
                }
                rows.push(SeriesRow { date, obs, sim });
            }
            _ => dropped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptySeries { dropped });
    }
    Ok(SeriesPair {
        basin_id: basin_id.to_string(),
        rows,
        dropped_rows: dropped,
    })
}

// None for a missing or non-finite cell.
fn parse_value(cell: &str, line: u64, column: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {column} value `{cell}`"),
    })?;
    Ok(v.is_finite().then_some(v))
}

pub fn write_series(series: &SeriesPair, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "obs", "sim"])?;
    for row in &series.rows {
        w.write_record([row.date.to_string(), row.obs.to_string(), row.sim.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
