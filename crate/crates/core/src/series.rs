//! Forecast pairs, loss functions and the loss-differential series.
//!
//! Every test in this crate consumes a [`LossDifferentialSeries`]: the
//! sequence `d_s = L(e1_s) - L(e2_s)` over an evaluation period `s = 1..T`.
//! Time labels are opaque; when every label parses as a quarter (`2020Q2`)
//! or as an integer they must be strictly increasing, otherwise only
//! uniqueness is enforced.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One period of two competing forecasts and the realisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    #[serde(rename = "period")]
    pub time_index: String,
    pub actual: f64,
    pub forecast_a: f64,
    pub forecast_b: f64,
}

impl ForecastRecord {
    pub fn new(time_index: impl Into<String>, actual: f64, forecast_a: f64, forecast_b: f64) -> Self {
        Self {
            time_index: time_index.into(),
            actual,
            forecast_a,
            forecast_b,
        }
    }
}

/// Loss applied to a forecast error.
///
/// Only squared error ships; new losses are added as variants and
/// registered in [`Loss::from_name`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    SquaredError,
}

impl Loss {
    pub const ALL: &'static [Loss] = &[Loss::SquaredError];

    pub fn name(self) -> &'static str {
        match self {
            Loss::SquaredError => "squared_error",
        }
    }

    pub fn from_name(name: &str) -> Option<Loss> {
        Loss::ALL.iter().copied().find(|l| l.name() == name)
    }

    pub fn eval(self, error: f64) -> f64 {
        match self {
            Loss::SquaredError => error * error,
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Empirical,
    Simulated,
}

/// The evaluation-period loss differential `d_1..d_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDifferentialSeries {
    values: Vec<f64>,
    loss_name: String,
    origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl LossDifferentialSeries {
    /// Wraps raw differentials. Values must be finite and nonempty.
    pub fn new(values: Vec<f64>, loss_name: impl Into<String>, origin: Origin) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid_data(
                format!("index {}", i + 1),
                "non-finite loss differential",
            ));
        }
        Ok(Self {
            values,
            loss_name: loss_name.into(),
            origin,
            labels: None,
        })
    }

    /// Simulated series; skips label bookkeeping.
    pub fn simulated(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Loss::SquaredError.name(), Origin::Simulated)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.values.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} values",
                labels.len(),
                self.values.len()
            )));
        }
        check_time_order(&labels)?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn loss_name(&self) -> &str {
        &self.loss_name
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Position (0-based) of a time label, if labels are attached.
    pub fn position_of(&self, label: &str) -> Option<usize> {
        self.labels.as_ref()?.iter().position(|l| l == label)
    }

    /// The first `len` observations, keeping labels and metadata.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.values.len() {
            return Err(Error::InvalidParameter(format!(
                "prefix length {len} outside 1..={}",
                self.values.len()
            )));
        }
        Ok(Self {
            values: self.values[..len].to_vec(),
            loss_name: self.loss_name.clone(),
            origin: self.origin,
            labels: self.labels.as_ref().map(|l| l[..len].to_vec()),
        })
    }

    /// Same metadata, transformed values. Used by property tests and the CLI.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut out = Self::new(
            self.values.iter().map(|&v| f(v)).collect(),
            self.loss_name.clone(),
            self.origin,
        )?;
        out.labels = self.labels.clone();
        Ok(out)
    }
}

/// Rolling estimation window `R` and forecast horizon `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalWindowConfig {
    pub rolling_window: usize,
    pub horizon: usize,
}

impl EvalWindowConfig {
    pub fn new(rolling_window: usize, horizon: usize, total_len: usize) -> Result<Self> {
        if rolling_window == 0 || horizon == 0 {
            return Err(Error::InvalidParameter(
                "rolling window and horizon must be at least 1".into(),
            ));
        }
        if rolling_window + horizon > total_len {
            return Err(Error::InvalidParameter(format!(
                "R + h = {} exceeds sample length {total_len}",
                rolling_window + horizon
            )));
        }
        Ok(Self {
            rolling_window,
            horizon,
        })
    }

    /// Number of evaluation points `T` such that the sample has length `R + h + T - 1`.
    pub fn evaluation_len(&self, total_len: usize) -> usize {
        total_len + 1 - self.rolling_window - self.horizon
    }
}

/// Builds `d_s = L(actual - forecast_a) - L(actual - forecast_b)`.
pub fn make_loss_differential(records: &[ForecastRecord], loss: Loss) -> Result<LossDifferentialSeries> {
    if records.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut values = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        for (name, v) in [
            ("actual", r.actual),
            ("forecast_a", r.forecast_a),
            ("forecast_b", r.forecast_b),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid_data(
                    format!("index {} ({})", i + 1, r.time_index),
                    format!("{name} is not finite"),
                ));
            }
        }
        values.push(loss.eval(r.actual - r.forecast_a) - loss.eval(r.actual - r.forecast_b));
    }
    let labels = records.iter().map(|r| r.time_index.clone()).collect();
    LossDifferentialSeries::new(values, loss.name(), Origin::Empirical)?.with_labels(labels)
}

/// Calendar quarter, written `YYYYQn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    pub year: i32,
    pub q: u8,
}

impl Quarter {
    pub fn next(self) -> Quarter {
        if self.q == 4 {
            Quarter { year: self.year + 1, q: 1 }
        } else {
            Quarter { year: self.year, q: self.q + 1 }
        }
    }
}

impl FromStr for Quarter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("malformed quarter label {s:?}, expected YYYYQn"));
        let (year, q) = s.trim().split_once(['Q', 'q']).ok_or_else(bad)?;
        if year.len() != 4 || q.len() != 1 {
            return Err(bad());
        }
        let year: i32 = year.parse().map_err(|_| bad())?;
        let q: u8 = q.parse().map_err(|_| bad())?;
        if !(1..=4).contains(&q) {
            return Err(bad());
        }
        Ok(Quarter { year, q })
    }
}

impl Serialize for Quarter {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

fn check_time_order(labels: &[String]) -> Result<()> {
    fn increasing<T: PartialOrd>(keys: &[T], labels: &[String]) -> Result<()> {
        for (i, w) in keys.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::invalid_data(
                    &labels[i + 1],
                    format!("time index not strictly increasing after {}", labels[i]),
                ));
            }
        }
        Ok(())
    }

    if let Ok(qs) = labels.iter().map(|l| l.parse::<Quarter>()).collect::<Result<Vec<_>>>() {
        return increasing(&qs, labels);
    }
    if let Ok(ns) = labels.iter().map(|l| l.trim().parse::<i64>()).collect::<std::result::Result<Vec<_>, _>>() {
        return increasing(&ns, labels);
    }
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::invalid_data(l, "duplicate time index"));
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct DifferentialRow {
    period: String,
    d: f64,
}

/// Reads either `period,actual,forecast_a,forecast_b` or `period,d`.
pub fn read_series_csv<R: Read>(reader: R, loss: Loss) -> Result<LossDifferentialSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    match headers.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["period", "d"] => {
            let mut values = Vec::new();
            let mut labels = Vec::new();
            for (i, row) in rdr.deserialize::<DifferentialRow>().enumerate() {
                let row = row.map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
                labels.push(row.period);
                values.push(row.d);
            }
            if values.is_empty() {
                return Err(Error::EmptySeries);
            }
            LossDifferentialSeries::new(values, loss.name(), Origin::Empirical)?.with_labels(labels)
        }
        ["period", "actual", "forecast_a", "forecast_b"] => {
            let records = rdr
                .deserialize::<ForecastRecord>()
                .enumerate()
                .map(|(i, r)| r.map_err(|e| Error::Parse(format!("row {}: {e}", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            make_loss_differential(&records, loss)
        }
        other => Err(Error::Parse(format!(
            "unrecognised header {other:?}; expected period,actual,forecast_a,forecast_b or period,d"
        ))),
    }
}

pub fn load_series_csv(path: impl AsRef<Path>, loss: Loss) -> Result<LossDifferentialSeries> {
    let file = crate::error::open(path.as_ref())?;
    read_series_csv(file, loss)
}
