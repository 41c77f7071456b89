//! Nowcast evaluation of quarterly nominal GDP: survey median versus a
//! no-growth benchmark.
//!
//! Errors are growth-rate errors in percentage points, scaled by the previous
//! quarter's realised level:
//!
//! ```text
//! e_spf_t   = 100 * (y_t - nowcast_t) / y_{t-1}
//! e_naive_t = 100 * (y_t - y_{t-1})   / y_{t-1}
//! d_t       = e_spf_t^2 - e_naive_t^2
//! ```
//!
//! The dataset must contain the quarter preceding the first evaluated one.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global_tests::{dm_test, fluctuation_test, DmOutcome, FluctuationOutcome, DM_FIXED_SMOOTHING_CV_5PCT};
use crate::local_tests::{
    max_procedure_split, s_test_block_with, BlockOptions, MaxOutcome, SOutcome, WeightingScheme,
};
use crate::series::{LossDifferentialSeries, Loss, Origin, Quarter};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NowcastDataset {
    quarters: Vec<Quarter>,
    gdp_level: Vec<f64>,
    spf_median_level: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct NowcastRow {
    quarter: String,
    gdp_level: f64,
    spf_median_level: f64,
}

impl NowcastDataset {
    pub fn new(quarters: Vec<Quarter>, gdp_level: Vec<f64>, spf_median_level: Vec<f64>) -> Result<Self> {
        if quarters.is_empty() {
            return Err(Error::EmptySeries);
        }
        if quarters.len() != gdp_level.len() || quarters.len() != spf_median_level.len() {
            return Err(Error::InvalidParameter("misaligned nowcast columns".into()));
        }
        for w in quarters.windows(2) {
            if w[1] != w[0].next() {
                return Err(Error::GapInSeries {
                    after: w[0].to_string(),
                    expected: w[0].next().to_string(),
                    found: w[1].to_string(),
                });
            }
        }
        for (i, q) in quarters.iter().enumerate() {
            for (name, v) in [("gdp_level", gdp_level[i]), ("spf_median_level", spf_median_level[i])] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid_data(q, format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(Self {
            quarters,
            gdp_level,
            spf_median_level,
        })
    }

    pub fn len(&self) -> usize {
        self.quarters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quarters.is_empty()
    }

    pub fn quarters(&self) -> &[Quarter] {
        &self.quarters
    }

    pub fn gdp_level(&self) -> &[f64] {
        &self.gdp_level
    }

    pub fn spf_median_level(&self) -> &[f64] {
        &self.spf_median_level
    }
}

/// Parses `quarter,gdp_level,spf_median_level`.
pub fn read_nowcast_csv<R: Read>(reader: R) -> Result<NowcastDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if headers != ["quarter", "gdp_level", "spf_median_level"] {
        return Err(Error::Parse(format!(
            "unexpected header {headers:?}; expected quarter,gdp_level,spf_median_level"
        )));
    }
    let (mut quarters, mut gdp, mut spf) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in rdr.deserialize::<NowcastRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
        quarters.push(row.quarter.parse::<Quarter>()?);
        gdp.push(row.gdp_level);
        spf.push(row.spf_median_level);
    }
    NowcastDataset::new(quarters, gdp, spf)
}

pub fn load_nowcast_csv(path: impl AsRef<Path>) -> Result<NowcastDataset> {
    read_nowcast_csv(crate::error::open(path.as_ref())?)
}

/// Growth rates and nowcast errors in percentage points, from the second quarter on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NowcastErrors {
    pub quarters: Vec<Quarter>,
    pub realized_growth: Vec<f64>,
    pub spf_growth: Vec<f64>,
    pub naive_growth: Vec<f64>,
    pub e_spf: Vec<f64>,
    pub e_naive: Vec<f64>,
}

pub fn nowcast_errors(data: &NowcastDataset) -> Result<NowcastErrors> {
    let n = data.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { needed: 2, got: n });
    }
    let y = &data.gdp_level;
    let yhat = &data.spf_median_level;
    let mut out = NowcastErrors {
        quarters: data.quarters[1..].to_vec(),
        realized_growth: Vec::with_capacity(n - 1),
        spf_growth: Vec::with_capacity(n - 1),
        naive_growth: vec![0.0; n - 1],
        e_spf: Vec::with_capacity(n - 1),
        e_naive: Vec::with_capacity(n - 1),
    };
    for t in 1..n {
        let prev = y[t - 1];
        out.realized_growth.push(100.0 * (y[t] - prev) / prev);
        out.spf_growth.push(100.0 * (yhat[t] - prev) / prev);
        out.e_spf.push(100.0 * (y[t] - yhat[t]) / prev);
        out.e_naive.push(100.0 * (y[t] - prev) / prev);
    }
    Ok(out)
}

/// `d_t = e_spf_t^2 - e_naive_t^2`, labelled by quarter.
pub fn build_errors(data: &NowcastDataset) -> Result<LossDifferentialSeries> {
    let e = nowcast_errors(data)?;
    differential(&e, e.quarters.len())
}

fn differential(e: &NowcastErrors, len: usize) -> Result<LossDifferentialSeries> {
    let loss = Loss::SquaredError;
    let values = (0..len).map(|t| loss.eval(e.e_spf[t]) - loss.eval(e.e_naive[t])).collect();
    LossDifferentialSeries::new(values, loss.name(), Origin::Empirical)?
        .with_labels(e.quarters[..len].iter().map(Quarter::to_string).collect())
}

/// Plot-ready CSV of growth rates and errors.
pub fn write_plot_csv<W: Write>(e: &NowcastErrors, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "quarter",
        "realized_growth",
        "spf_nowcast_growth",
        "naive_nowcast_growth",
        "e_spf",
        "e_naive",
    ])?;
    for t in 0..e.quarters.len() {
        w.write_record([
            e.quarters[t].to_string(),
            e.realized_growth[t].to_string(),
            e.spf_growth[t].to_string(),
            e.naive_growth[t].to_string(),
            e.e_spf[t].to_string(),
            e.e_naive[t].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub bandwidth: Option<usize>,
    pub dm_critical_value: f64,
    pub kappa: f64,
    pub fl_critical_value: Option<f64>,
    pub alpha: f64,
    /// Length of the instability block; defaults to the number of quarters after the split.
    pub block_length: Option<usize>,
    pub schemes: Vec<WeightingScheme>,
    pub block_options: BlockOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bandwidth: None,
            dm_critical_value: DM_FIXED_SMOOTHING_CV_5PCT,
            kappa: 0.3,
            fl_critical_value: None,
            alpha: 0.05,
            block_length: None,
            schemes: WeightingScheme::ALL.to_vec(),
            block_options: BlockOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub subperiod: String,
    #[serde(rename = "T")]
    pub len: usize,
    pub rmse_spf: f64,
    pub rmse_naive: f64,
    pub ratio: f64,
    pub dm: DmOutcome,
    pub fl: FluctuationOutcome,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub s_outcomes: Vec<SOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<MaxOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationPair {
    pub schema_version: u32,
    pub split: String,
    pub stable: EvaluationReport,
    pub full: EvaluationReport,
}

fn rmse(e: &[f64]) -> f64 {
    (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt()
}

fn global_report(e: &NowcastErrors, len: usize, config: &EvalConfig) -> Result<EvaluationReport> {
    let d = differential(e, len)?;
    let rmse_spf = rmse(&e.e_spf[..len]);
    let rmse_naive = rmse(&e.e_naive[..len]);
    Ok(EvaluationReport {
        subperiod: format!("{}-{}", e.quarters[0], e.quarters[len - 1]),
        len,
        rmse_spf,
        rmse_naive,
        ratio: rmse_spf / rmse_naive,
        dm: dm_test(&d, config.bandwidth, Some(config.dm_critical_value), 0.05)?,
        fl: fluctuation_test(&d, config.kappa, config.bandwidth, config.fl_critical_value)?,
        s_outcomes: Vec::new(),
        max: None,
    })
}

/// Evaluates the stable subsample (up to and including `end_of_stable`) and the full sample.
///
/// The full-sample report adds the block S test on the final quarters under
/// every configured weighting scheme and the MAX procedure with the stable
/// subsample as training period.
pub fn evaluate(data: &NowcastDataset, end_of_stable: Quarter, config: &EvalConfig) -> Result<EvaluationPair> {
    let e = nowcast_errors(data)?;
    let n = e.quarters.len();
    let split = e
        .quarters
        .iter()
        .position(|q| *q == end_of_stable)
        .ok_or_else(|| Error::InvalidParameter(format!("split quarter {end_of_stable} outside the evaluation sample")))?
        + 1;
    if split >= n {
        return Err(Error::InvalidParameter(format!(
            "split quarter {end_of_stable} leaves no quarters after it"
        )));
    }
    let stable = global_report(&e, split, config)?;
    let mut full = global_report(&e, n, config)?;

    let d = differential(&e, n)?;
    let k = config.block_length.unwrap_or(n - split);
    full.s_outcomes = config
        .schemes
        .iter()
        .map(|&scheme| s_test_block_with(&d, k, config.alpha, scheme, config.block_options))
        .collect::<Result<_>>()?;
    full.max = Some(max_procedure_split(&d, split, n)?);

    Ok(EvaluationPair {
        schema_version: REPORT_SCHEMA_VERSION,
        split: end_of_stable.to_string(),
        stable,
        full,
    })
}
