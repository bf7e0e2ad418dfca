//! Strict CSV ingestion and emission for monthly series.
//!
//! Input format: UTF-8, header `month,value`, months as `YYYY-MM` in
//! consecutive ascending order, values nonnegative reals with a `.`
//! decimal separator (LF or CRLF line endings). A literal `<1` cell, as
//! produced by Google Trends exports for sub-unit search volume, parses
//! as 0.0. Gaps are an error, never interpolated.

use std::path::Path;

use thiserror::Error;

use tscast_core::series::{MonthStamp, SeriesError, TimeSeries};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected header `month,value`, found {found:?}")]
    BadHeader { path: String, found: String },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: missing month {missing} (gap in the series)")]
    Gap { path: String, missing: MonthStamp },
    #[error("{path}:{line}: month {month} is not after its predecessor")]
    NonMonotonic {
        path: String,
        line: u64,
        month: MonthStamp,
    },
    #[error("{path}: no data rows")]
    Empty { path: String },
    #[error("regressor {name:?} does not cover the target's month range")]
    Misaligned { name: String },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Read one monthly series; the series is named after the file stem.
pub fn ingest_csv(path: &Path) -> Result<TimeSeries, IngestError> {
    let p = path_str(path);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IngestError::Io {
                path: p.clone(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => IngestError::Parse {
                path: p.clone(),
                line: 1,
                message: e.to_string(),
            },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| IngestError::Parse {
            path: p.clone(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["month", "value"] {
        return Err(IngestError::BadHeader {
            path: p,
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut start = None;
    let mut prev: Option<MonthStamp> = None;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Parse {
            path: p.clone(),
            line: e.position().map_or(0, csv::Position::line),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        if record.len() != 2 {
            return Err(IngestError::Parse {
                path: p,
                line,
                message: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let month: MonthStamp = record[0].trim().parse().map_err(|e| IngestError::Parse {
            path: p.clone(),
            line,
            message: format!("{e}"),
        })?;
        let raw = record[1].trim();
        // Google Trends exports write `<1` for sub-unit search volume.
        let value = if raw == "<1" {
            0.0
        } else {
            raw.parse::<f64>().map_err(|_| IngestError::Parse {
                path: p.clone(),
                line,
                message: format!("invalid value {raw:?}"),
            })?
        };
        if !value.is_finite() || value < 0.0 {
            return Err(IngestError::Parse {
                path: p,
                line,
                message: format!("value {raw:?} must be a finite nonnegative number"),
            });
        }

        match prev {
            None => start = Some(month),
            Some(last) => {
                let expected = last.next();
                if month <= last {
                    return Err(IngestError::NonMonotonic { path: p, line, month });
                }
                if month != expected {
                    return Err(IngestError::Gap { path: p, missing: expected });
                }
            }
        }
        prev = Some(month);
        values.push(value);
    }

    let start = start.ok_or(IngestError::Empty { path: path_str(path) })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".to_string());
    Ok(TimeSeries::new(start, values, name)?)
}

/// Emit a series in the ingestion format. Values are printed with the
/// shortest representation that round-trips, so `ingest_csv` recovers
/// the series exactly.
pub fn write_csv(series: &TimeSeries, path: &Path) -> Result<(), IngestError> {
    let mut out = String::from("month,value\n");
    for (stamp, value) in series.stamps().zip(series.values()) {
        out.push_str(&format!("{stamp},{value}\n"));
    }
    std::fs::write(path, out).map_err(|source| IngestError::Io {
        path: path_str(path),
        source,
    })
}

/// Target series plus aligned named regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub target: TimeSeries,
    pub regressors: Vec<TimeSeries>,
    /// Source file paths or generator seed, for report headers.
    pub provenance: String,
}

impl DatasetBundle {
    pub fn new(
        target: TimeSeries,
        regressors: Vec<TimeSeries>,
        provenance: impl Into<String>,
    ) -> Result<Self, IngestError> {
        for r in &regressors {
            if !r.same_span(&target) {
                return Err(IngestError::Misaligned {
                    name: r.name().to_string(),
                });
            }
        }
        Ok(Self {
            target,
            regressors,
            provenance: provenance.into(),
        })
    }
}
