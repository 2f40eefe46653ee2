//! Dataset containers and CSV ingestion.
//!
//! Two CSV layouts are accepted, both with a header row:
//!
//! * wide: `t, xhat_1..xhat_D, x_1..x_D`
//! * long: `t, dim, xhat, x` (one row per dimension, `dim` is 1-based)
//!
//! An optional `label` column carries a free-form (usually ISO-8601) tag.
//! A missing measurement is an empty field.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Values within this distance outside `[0, 1]` are clamped; further out is an error.
pub const CLAMP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dimension spec: horizons={horizons}, locations={locations}")]
    InvalidSpec { horizons: usize, locations: usize },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("non-monotone timestamps: {previous} followed by {next} (line {line})")]
    NonMonotone { previous: i64, next: i64, line: u64 },
    #[error("line {line}: value {value} outside [0, 1] beyond tolerance")]
    OutOfRange { line: u64, value: f64 },
    #[error("frame t={t}: expected vectors of length {expected}, got {actual}")]
    Length { t: i64, expected: usize, actual: usize },
    #[error("frame t={t} lies in the training range but has no measurement")]
    MissingTrainingMeasurement { t: i64 },
    #[error("training length {train} exceeds frame count {frames}")]
    Split { train: usize, frames: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Problem dimensionality `D = K × Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionSpec {
    horizons: usize,
    locations: usize,
}

impl DimensionSpec {
    pub fn new(horizons: usize, locations: usize) -> Result<Self, DataError> {
        if horizons == 0 || locations == 0 {
            return Err(DataError::InvalidSpec {
                horizons,
                locations,
            });
        }
        Ok(Self {
            horizons,
            locations,
        })
    }

    /// Purely temporal problem (`Z = 1`).
    pub fn temporal(horizons: usize) -> Result<Self, DataError> {
        Self::new(horizons, 1)
    }

    pub fn horizons(&self) -> usize {
        self.horizons
    }

    pub fn locations(&self) -> usize {
        self.locations
    }

    pub fn dim(&self) -> usize {
        self.horizons * self.locations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Wide,
    Long,
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wide" => Ok(Self::Wide),
            "long" => Ok(Self::Long),
            other => Err(format!("unknown data format '{other}' (expected wide or long)")),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Wide => "wide",
            Self::Long => "long",
        })
    }
}

/// Point forecast and (once observed) measurement at one time index.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastFrame {
    pub t: i64,
    pub label: Option<String>,
    pub forecast: Vec<f64>,
    pub measurement: Option<Vec<f64>>,
}

impl ForecastFrame {
    /// Forecast error `x − x̂`, if the measurement is known.
    pub fn error(&self) -> Option<Vec<f64>> {
        self.measurement
            .as_ref()
            .map(|x| x.iter().zip(&self.forecast).map(|(a, b)| a - b).collect())
    }
}

/// Time-ordered frames split into a training prefix and an evaluation suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    spec: DimensionSpec,
    frames: Vec<ForecastFrame>,
    train_len: usize,
}

impl Dataset {
    pub fn new(
        spec: DimensionSpec,
        frames: Vec<ForecastFrame>,
        train_len: usize,
    ) -> Result<Self, DataError> {
        if train_len > frames.len() {
            return Err(DataError::Split {
                train: train_len,
                frames: frames.len(),
            });
        }
        let d = spec.dim();
        for (i, f) in frames.iter().enumerate() {
            if let Some(prev) = i.checked_sub(1).map(|p| frames[p].t) {
                if f.t <= prev {
                    return Err(DataError::NonMonotone {
                        previous: prev,
                        next: f.t,
                        line: 0,
                    });
                }
            }
            let lens = std::iter::once(f.forecast.len()).chain(f.measurement.as_ref().map(Vec::len));
            for len in lens {
                if len != d {
                    return Err(DataError::Length {
                        t: f.t,
                        expected: d,
                        actual: len,
                    });
                }
            }
            if i < train_len && f.measurement.is_none() {
                return Err(DataError::MissingTrainingMeasurement { t: f.t });
            }
        }
        Ok(Self {
            spec,
            frames,
            train_len,
        })
    }

    pub fn spec(&self) -> DimensionSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn frames(&self) -> &[ForecastFrame] {
        &self.frames
    }

    pub fn train_len(&self) -> usize {
        self.train_len
    }

    pub fn training(&self) -> &[ForecastFrame] {
        &self.frames[..self.train_len]
    }

    pub fn evaluation(&self) -> &[ForecastFrame] {
        &self.frames[self.train_len..]
    }

    /// Keeps the first `len` frames (the split is preserved when possible).
    pub fn truncated(&self, len: usize) -> Self {
        let len = len.min(self.frames.len());
        Self {
            spec: self.spec,
            frames: self.frames[..len].to_vec(),
            train_len: self.train_len.min(len),
        }
    }

    /// Replaces the measurement at frame index `idx`.
    pub fn with_measurement(&self, idx: usize, x: Vec<f64>) -> Self {
        let mut out = self.clone();
        out.frames[idx].measurement = Some(x);
        out
    }
}

fn normalize(value: f64, line: u64) -> Result<f64, DataError> {
    if !value.is_finite() {
        return Err(DataError::Malformed {
            line,
            message: format!("non-finite value {value}"),
        });
    }
    if !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&value) {
        return Err(DataError::OutOfRange { line, value });
    }
    Ok(value.clamp(0.0, 1.0))
}

fn parse_field(raw: &str, line: u64, column: &str) -> Result<f64, DataError> {
    raw.trim().parse::<f64>().map_err(|_| DataError::Malformed {
        line,
        message: format!("column '{column}': cannot parse '{raw}'"),
    })
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| DataError::Malformed {
            line: 1,
            message: format!("missing column '{name}'"),
        })
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, csv::Position::line)
}

/// Parses frames without applying the training/evaluation split.
pub fn read_frames<R: Read>(
    reader: R,
    spec: DimensionSpec,
    format: DataFormat,
) -> Result<Vec<ForecastFrame>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let d = spec.dim();
    let t_col = column(&headers, "t")?;
    let label_col = headers.iter().position(|h| h == "label");

    let mut frames: Vec<ForecastFrame> = Vec::new();
    let parse_t = |record: &csv::StringRecord, line: u64| -> Result<i64, DataError> {
        record[t_col].parse::<i64>().map_err(|_| DataError::Malformed {
            line,
            message: format!("column 't': cannot parse '{}' as integer", &record[t_col]),
        })
    };

    match format {
        DataFormat::Wide => {
            let xhat: Vec<usize> = (1..=d)
                .map(|i| column(&headers, &format!("xhat_{i}")))
                .collect::<Result<_, _>>()?;
            let x: Vec<usize> = (1..=d)
                .map(|i| column(&headers, &format!("x_{i}")))
                .collect::<Result<_, _>>()?;
            for record in rdr.records() {
                let record = record?;
                let line = line_of(&record);
                let t = parse_t(&record, line)?;
                if let Some(prev) = frames.last() {
                    if t <= prev.t {
                        return Err(DataError::NonMonotone {
                            previous: prev.t,
                            next: t,
                            line,
                        });
                    }
                }
                let forecast = xhat
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| normalize(parse_field(&record[c], line, &format!("xhat_{}", i + 1))?, line))
                    .collect::<Result<Vec<_>, _>>()?;
                let present = x.iter().filter(|&&c| !record[c].is_empty()).count();
                let measurement = match present {
                    0 => None,
                    n if n == d => Some(
                        x.iter()
                            .enumerate()
                            .map(|(i, &c)| normalize(parse_field(&record[c], line, &format!("x_{}", i + 1))?, line))
                            .collect::<Result<Vec<_>, _>>()?,
                    ),
                    _ => {
                        return Err(DataError::Malformed {
                            line,
                            message: "measurement vector partially missing".into(),
                        })
                    }
                };
                frames.push(ForecastFrame {
                    t,
                    label: label_col.map(|c| record[c].to_string()).filter(|s| !s.is_empty()),
                    forecast,
                    measurement,
                });
            }
        }
        DataFormat::Long => {
            let dim_col = column(&headers, "dim")?;
            let xhat_col = column(&headers, "xhat")?;
            let x_col = column(&headers, "x")?;
            struct Partial {
                label: Option<String>,
                forecast: Vec<Option<f64>>,
                measurement: Vec<Option<f64>>,
                line: u64,
            }
            let mut order: Vec<i64> = Vec::new();
            let mut partial: BTreeMap<i64, Partial> = BTreeMap::new();
            for record in rdr.records() {
                let record = record?;
                let line = line_of(&record);
                let t = parse_t(&record, line)?;
                let k: usize = record[dim_col].parse().map_err(|_| DataError::Malformed {
                    line,
                    message: format!("column 'dim': cannot parse '{}'", &record[dim_col]),
                })?;
                if k == 0 || k > d {
                    return Err(DataError::Malformed {
                        line,
                        message: format!("dim {k} outside 1..={d}"),
                    });
                }
                if let Some(&last) = order.last() {
                    if t < last {
                        return Err(DataError::NonMonotone {
                            previous: last,
                            next: t,
                            line,
                        });
                    }
                }
                if order.last() != Some(&t) {
                    order.push(t);
                }
                let entry = partial.entry(t).or_insert_with(|| Partial {
                    label: None,
                    forecast: vec![None; d],
                    measurement: vec![None; d],
                    line,
                });
                if entry.forecast[k - 1].is_some() {
                    return Err(DataError::Malformed {
                        line,
                        message: format!("duplicate row for t={t}, dim={k}"),
                    });
                }
                entry.forecast[k - 1] = Some(normalize(parse_field(&record[xhat_col], line, "xhat")?, line)?);
                if !record[x_col].is_empty() {
                    entry.measurement[k - 1] =
                        Some(normalize(parse_field(&record[x_col], line, "x")?, line)?);
                }
                if let Some(c) = label_col {
                    if !record[c].is_empty() {
                        entry.label = Some(record[c].to_string());
                    }
                }
            }
            for t in order {
                let p = partial.remove(&t).expect("recorded timestamp");
                let forecast: Option<Vec<f64>> = p.forecast.iter().copied().collect();
                let forecast = forecast.ok_or_else(|| DataError::Malformed {
                    line: p.line,
                    message: format!("t={t} does not cover all {d} dimensions"),
                })?;
                let seen = p.measurement.iter().filter(|m| m.is_some()).count();
                let measurement = match seen {
                    0 => None,
                    n if n == d => Some(p.measurement.iter().map(|m| m.unwrap_or_default()).collect()),
                    _ => {
                        return Err(DataError::Malformed {
                            line: p.line,
                            message: format!("t={t}: measurement vector partially missing"),
                        })
                    }
                };
                frames.push(ForecastFrame {
                    t,
                    label: p.label,
                    forecast,
                    measurement,
                });
            }
        }
    }
    Ok(frames)
}

/// Loads and validates a dataset whose first `train_len` frames form the
/// training range.
pub fn load_dataset(
    path: &Path,
    spec: DimensionSpec,
    format: DataFormat,
    train_len: usize,
) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    let frames = read_frames(file, spec, format)?;
    Dataset::new(spec, frames, train_len)
}

/// Writes a dataset in the requested layout. Values use the shortest
/// round-tripping decimal representation.
pub fn write_dataset<W: Write>(
    dataset: &Dataset,
    writer: W,
    format: DataFormat,
) -> Result<(), DataError> {
    let d = dataset.dim();
    let with_label = dataset.frames().iter().any(|f| f.label.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    match format {
        DataFormat::Wide => {
            let mut header = vec!["t".to_string()];
            header.extend((1..=d).map(|i| format!("xhat_{i}")));
            header.extend((1..=d).map(|i| format!("x_{i}")));
            if with_label {
                header.push("label".into());
            }
            w.write_record(&header)?;
            for f in dataset.frames() {
                let mut row = vec![f.t.to_string()];
                row.extend(f.forecast.iter().map(f64::to_string));
                row.extend((0..d).map(|i| fmt_opt(f.measurement.as_ref().map(|m| m[i]))));
                if with_label {
                    row.push(f.label.clone().unwrap_or_default());
                }
                w.write_record(&row)?;
            }
        }
        DataFormat::Long => {
            let mut header = vec!["t", "dim", "xhat", "x"];
            if with_label {
                header.push("label");
            }
            w.write_record(&header)?;
            for f in dataset.frames() {
                for i in 0..d {
                    let mut row = vec![
                        f.t.to_string(),
                        (i + 1).to_string(),
                        f.forecast[i].to_string(),
                        fmt_opt(f.measurement.as_ref().map(|m| m[i])),
                    ];
                    if with_label {
                        row.push(f.label.clone().unwrap_or_default());
                    }
                    w.write_record(&row)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
