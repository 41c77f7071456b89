//! Simulation design for size and power studies.
//!
//! The data-generating process is
//!
//! ```text
//! y_t = beta * x_t + eta_t
//! x_t = rho_x * x_{t-1} + xi_t,        xi_t  ~ N(0, sigma2_x)
//! eta_t = rho_eta * eta_{t-1} + eps_t, eps_t ~ N(0, sigma2_eta)
//! ```
//!
//! Two forecasters observe `x_t` with independent measurement noise of
//! variance `sigma2_1` and `sigma2_2_base * delta_s`, fit a no-intercept
//! regression of `y` on their noisy regressor over the previous `R`
//! observations and forecast `beta_hat * x*_t`. The loss differential is the
//! difference of squared errors over the `T` evaluation points.
//!
//! Replication `r` of every cell draws from counter stream `r` of a family
//! fixed per experiment, so all cells share common random numbers and the
//! tables are bit-identical for any thread count.

use std::fmt::{self, Write as _};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global_tests::{dm_test, fluctuation_test, DM_FIXED_SMOOTHING_CV_5PCT};
use crate::local_tests::{max_procedure, s_test_block, s_test_single, WeightingScheme};
use crate::rng::substream;
use crate::series::LossDifferentialSeries;

const FAMILY_SINGLE: u64 = 0x5EED_0000;
const FAMILY_TABLE1: u64 = 0x5EED_0001;
const FAMILY_TABLE2: u64 = 0x5EED_0002;

/// Where the second forecaster's noise variance is multiplied by `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "length")]
pub enum DeviationPattern {
    /// Every period, including the pre-sample estimation window.
    Global,
    /// The final `n` evaluation points.
    LocalTail(usize),
    /// The final `n` evaluation points, intended for very small `n`.
    Point(usize),
}

impl DeviationPattern {
    fn tail_len(self) -> Option<usize> {
        match self {
            DeviationPattern::Global => None,
            DeviationPattern::LocalTail(n) | DeviationPattern::Point(n) => Some(n),
        }
    }

    pub fn label(self) -> String {
        match self {
            DeviationPattern::Global => "all s".to_string(),
            DeviationPattern::LocalTail(n) => format!("s>T-{n}"),
            DeviationPattern::Point(1) => "s=T".to_string(),
            DeviationPattern::Point(n) => format!("last {n}"),
        }
    }
}

impl fmt::Display for DeviationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// How `delta_s` enters the second forecaster's measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaScale {
    /// Noise standard deviation `sqrt(sigma2_2_base) * delta_s`; reproduces the reference size and power tables.
    #[default]
    StandardDeviation,
    /// Noise variance `sigma2_2_base * delta_s`.
    Variance,
}

/// Initial state of the two AR(1) processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    /// Start at zero and discard `burn_in` draws.
    #[default]
    BurnIn,
    /// Draw the first state from the stationary distribution.
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    pub beta: f64,
    pub rho_x: f64,
    pub sigma2_x: f64,
    pub rho_eta: f64,
    pub sigma2_eta: f64,
    pub sigma2_1: f64,
    pub sigma2_2_base: f64,
    pub delta: f64,
    pub deviation_pattern: DeviationPattern,
    #[serde(rename = "T")]
    pub eval_len: usize,
    #[serde(rename = "R")]
    pub window: usize,
    pub burn_in: usize,
    #[serde(default)]
    pub initialization: Initialization,
    #[serde(default)]
    pub delta_scale: DeltaScale,
}

impl DgpParams {
    /// Baseline design: `beta = 1, rho_x = 0.75, sigma2_x = 1, rho_eta = 0.5,
    /// sigma2_eta = 0.1, sigma2_1 = sigma2_2 = 0.1`, `T = 80`, `R = 20`.
    pub fn baseline() -> Self {
        Self {
            beta: 1.0,
            rho_x: 0.75,
            sigma2_x: 1.0,
            rho_eta: 0.5,
            sigma2_eta: 0.1,
            sigma2_1: 0.1,
            sigma2_2_base: 0.1,
            delta: 1.0,
            deviation_pattern: DeviationPattern::Global,
            eval_len: 80,
            window: 20,
            burn_in: 200,
            initialization: Initialization::BurnIn,
            delta_scale: DeltaScale::StandardDeviation,
        }
    }

    pub fn with_deviation(mut self, pattern: DeviationPattern, delta: f64) -> Self {
        self.deviation_pattern = pattern;
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if [self.rho_x, self.rho_eta].iter().any(|r| r.is_nan() || r.abs() >= 1.0) {
            return bad("autoregressive coefficients must lie in (-1, 1)".into());
        }
        for (name, v) in [
            ("sigma2_x", self.sigma2_x),
            ("sigma2_eta", self.sigma2_eta),
            ("sigma2_1", self.sigma2_1),
            ("sigma2_2_base", self.sigma2_2_base),
            ("delta", self.delta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !self.beta.is_finite() {
            return bad("beta must be finite".into());
        }
        if self.window < 1 || self.eval_len < 2 {
            return bad("need R >= 1 and T >= 2".into());
        }
        if self.eval_len <= self.window {
            return bad(format!("need T > R, got T = {}, R = {}", self.eval_len, self.window));
        }
        if let Some(n) = self.deviation_pattern.tail_len() {
            if n == 0 || n > self.eval_len {
                return bad(format!("deviation length {n} outside 1..=T"));
            }
        }
        Ok(())
    }

    /// `delta_s` for evaluation index `s` (1-based; `s <= 0` is pre-sample).
    fn delta_at(&self, s: isize) -> f64 {
        match self.deviation_pattern.tail_len() {
            None => self.delta,
            Some(n) if s > self.eval_len as isize - n as isize => self.delta,
            Some(_) => 1.0,
        }
    }

    /// Standard deviation of the second forecaster's noise at evaluation index `s`.
    fn noise_sd_2(&self, s: isize) -> f64 {
        let delta = self.delta_at(s);
        match self.delta_scale {
            DeltaScale::StandardDeviation => self.sigma2_2_base.sqrt() * delta,
            DeltaScale::Variance => (self.sigma2_2_base * delta).sqrt(),
        }
    }
}

/// One draw of the loss-differential series.
pub fn simulate_dgp(params: &DgpParams, seed: u64) -> Result<LossDifferentialSeries> {
    params.validate()?;
    let mut rng = substream(seed, FAMILY_SINGLE, 0);
    LossDifferentialSeries::simulated(simulate_values(params, &mut rng, false))
}

/// Core generator; `params` must already be validated. With `shared_noise`
/// both forecasters see the same measurement-noise draws (scaled by their
/// own standard deviations).
pub(crate) fn simulate_values<R: Rng + ?Sized>(params: &DgpParams, rng: &mut R, shared_noise: bool) -> Vec<f64> {
    let p = params;
    let sd_x = p.sigma2_x.sqrt();
    let sd_eta = p.sigma2_eta.sqrt();
    let (mut x, mut eta) = match p.initialization {
        Initialization::BurnIn => (0.0, 0.0),
        Initialization::Stationary => {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            (
                z1 * (p.sigma2_x / (1.0 - p.rho_x * p.rho_x)).sqrt(),
                z2 * (p.sigma2_eta / (1.0 - p.rho_eta * p.rho_eta)).sqrt(),
            )
        }
    };
    let burn = match p.initialization {
        Initialization::BurnIn => p.burn_in,
        Initialization::Stationary => 0,
    };
    for _ in 0..burn {
        let xi: f64 = StandardNormal.sample(rng);
        let eps: f64 = StandardNormal.sample(rng);
        x = p.rho_x * x + sd_x * xi;
        eta = p.rho_eta * eta + sd_eta * eps;
    }

    let n = p.window + p.eval_len;
    let sd1 = p.sigma2_1.sqrt();
    let mut y = Vec::with_capacity(n);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    for tau in 0..n {
        if tau > 0 || matches!(p.initialization, Initialization::BurnIn) {
            let xi: f64 = StandardNormal.sample(rng);
            let eps: f64 = StandardNormal.sample(rng);
            x = p.rho_x * x + sd_x * xi;
            eta = p.rho_eta * eta + sd_eta * eps;
        }
        let v1: f64 = StandardNormal.sample(rng);
        let v2: f64 = if shared_noise { v1 } else { StandardNormal.sample(rng) };
        let s = tau as isize - p.window as isize + 1;
        let sd2 = p.noise_sd_2(s);
        y.push(p.beta * x + eta);
        x1.push(x + sd1 * v1);
        x2.push(x + sd2 * v2);
    }

    (p.window..n)
        .map(|t| {
            let lo = t - p.window;
            let e1 = y[t] - rolling_slope(&y[lo..t], &x1[lo..t]) * x1[t];
            let e2 = y[t] - rolling_slope(&y[lo..t], &x2[lo..t]) * x2[t];
            e1 * e1 - e2 * e2
        })
        .collect()
}

fn rolling_slope(y: &[f64], x: &[f64]) -> f64 {
    let (sxy, sxx) = y
        .iter()
        .zip(x)
        .fold((0.0, 0.0), |(a, b), (yi, xi)| (a + yi * xi, b + xi * xi));
    sxy / sxx
}

/// Settings of the test battery applied to every simulated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub dm_bandwidth: Option<usize>,
    pub dm_critical_value: f64,
    pub fl_kappa: f64,
    pub fl_critical_value: f64,
    pub s_alpha: f64,
    pub s_block: usize,
    pub s_schemes: Vec<WeightingScheme>,
    pub max_lambda1: f64,
    pub max_lambda2: f64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            dm_bandwidth: None,
            dm_critical_value: DM_FIXED_SMOOTHING_CV_5PCT,
            fl_kappa: 0.3,
            fl_critical_value: 3.012,
            s_alpha: 0.05,
            s_block: 1,
            s_schemes: WeightingScheme::ALL.to_vec(),
            // T* = 76, E = 80 for T = 80.
            max_lambda1: 0.95,
            max_lambda2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McExperimentSpec {
    pub dgp: DgpParams,
    /// `(pattern, delta)` rows of the result table.
    pub cells: Vec<(DeviationPattern, f64)>,
    pub replications: usize,
    pub seed: u64,
    pub tests: TestConfig,
    pub nominal_size: f64,
}

impl McExperimentSpec {
    /// Rows of the global/local comparison table.
    pub fn table1(replications: usize, seed: u64) -> Self {
        use DeviationPattern::*;
        let cells = vec![
            (Global, 1.0),
            (Global, 0.1),
            (Global, 2.0),
            (Global, 4.0),
            (LocalTail(20), 0.1),
            (LocalTail(20), 2.0),
            (LocalTail(20), 4.0),
            (Point(1), 0.1),
            (Point(1), 2.0),
            (Point(1), 4.0),
            (Point(1), 8.0),
        ];
        Self {
            dgp: DgpParams::baseline(),
            cells,
            replications,
            seed,
            tests: TestConfig::default(),
            nominal_size: 0.05,
        }
    }

    /// Rows of the S-test weighting comparison: instability on the last 3 points.
    pub fn table2(replications: usize, seed: u64) -> Self {
        let cells = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0]
            .into_iter()
            .map(|d| (DeviationPattern::Point(3), d))
            .collect();
        Self {
            dgp: DgpParams::baseline(),
            cells,
            replications,
            seed,
            tests: TestConfig {
                s_block: 3,
                ..TestConfig::default()
            },
            nominal_size: 0.05,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be at least 1".into()));
        }
        if !(self.nominal_size > 0.0 && self.nominal_size < 1.0) {
            return Err(Error::InvalidParameter("nominal size outside (0, 1)".into()));
        }
        if self.cells.is_empty() {
            return Err(Error::InvalidParameter("experiment has no cells".into()));
        }
        for &(pattern, delta) in &self.cells {
            self.dgp.clone().with_deviation(pattern, delta).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub pattern: DeviationPattern,
    pub delta: f64,
    /// Rejection frequency per column.
    pub rejection: Vec<f64>,
    /// Monte Carlo standard error `sqrt(p (1 - p) / n)` per column.
    pub mc_se: Vec<f64>,
    /// Replications where the test could not be computed (counted as non-rejections).
    pub failed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResultTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<McRow>,
    pub replications: usize,
    pub seed: u64,
}

/// Per-replication outcome for one test.
#[derive(Clone, Copy)]
enum Verdict {
    Reject,
    Accept,
    Failed,
}

impl<T> From<Result<T>> for Verdict
where
    T: Decision,
{
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(o) if o.rejects() => Verdict::Reject,
            Ok(_) => Verdict::Accept,
            Err(_) => Verdict::Failed,
        }
    }
}

trait Decision {
    fn rejects(&self) -> bool;
}

impl Decision for crate::global_tests::DmOutcome {
    fn rejects(&self) -> bool {
        self.reject
    }
}
impl Decision for crate::global_tests::FluctuationOutcome {
    fn rejects(&self) -> bool {
        self.reject
    }
}
impl Decision for crate::local_tests::SOutcome {
    fn rejects(&self) -> bool {
        self.reject
    }
}
impl Decision for crate::local_tests::MaxOutcome {
    fn rejects(&self) -> bool {
        self.flag
    }
}

fn run_cells<F>(spec: &McExperimentSpec, family: u64, columns: Vec<String>, title: &str, battery: F) -> Result<McResultTable>
where
    F: Fn(&LossDifferentialSeries) -> Vec<Verdict> + Sync,
{
    spec.validate()?;
    let ncol = columns.len();
    let mut rows = Vec::with_capacity(spec.cells.len());
    for &(pattern, delta) in &spec.cells {
        let params = spec.dgp.clone().with_deviation(pattern, delta);
        let (rejects, failed) = (0..spec.replications as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = substream(spec.seed, family, r);
                let values = simulate_values(&params, &mut rng, false);
                let mut rej = vec![0usize; ncol];
                let mut fail = vec![0usize; ncol];
                match LossDifferentialSeries::simulated(values) {
                    Ok(series) => {
                        for (j, v) in battery(&series).into_iter().enumerate() {
                            match v {
                                Verdict::Reject => rej[j] += 1,
                                Verdict::Accept => {}
                                Verdict::Failed => fail[j] += 1,
                            }
                        }
                    }
                    Err(_) => fail.iter_mut().for_each(|f| *f += 1),
                }
                (rej, fail)
            })
            .reduce(
                || (vec![0; ncol], vec![0; ncol]),
                |(mut a, mut b), (c, d)| {
                    a.iter_mut().zip(c).for_each(|(x, y)| *x += y);
                    b.iter_mut().zip(d).for_each(|(x, y)| *x += y);
                    (a, b)
                },
            );
        let n = spec.replications as f64;
        let rejection: Vec<f64> = rejects.iter().map(|&c| c as f64 / n).collect();
        let mc_se = rejection.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
        rows.push(McRow {
            pattern,
            delta,
            rejection,
            mc_se,
            failed,
        });
    }
    Ok(McResultTable {
        title: title.to_string(),
        columns,
        rows,
        replications: spec.replications,
        seed: spec.seed,
    })
}

/// DM, fluctuation, single-point S and MAX rejection frequencies per cell.
pub fn run_experiment_1(spec: &McExperimentSpec) -> Result<McResultTable> {
    let t = &spec.tests;
    let columns = ["DM", "Fl", "S", "MAX"].map(String::from).to_vec();
    run_cells(spec, FAMILY_TABLE1, columns, "Global and local tests", |d| {
        vec![
            dm_test(d, t.dm_bandwidth, Some(t.dm_critical_value), spec.nominal_size).into(),
            fluctuation_test(d, t.fl_kappa, t.dm_bandwidth, Some(t.fl_critical_value)).into(),
            s_test_single(d, t.s_alpha).into(),
            max_procedure(d, t.max_lambda1, t.max_lambda2).into(),
        ]
    })
}

/// Block S test rejection frequencies per weighting scheme.
pub fn run_experiment_2(spec: &McExperimentSpec) -> Result<McResultTable> {
    let t = &spec.tests;
    if t.s_schemes.is_empty() {
        return Err(Error::InvalidParameter("no weighting schemes selected".into()));
    }
    let columns = t.s_schemes.iter().map(|s| s.to_string()).collect();
    run_cells(spec, FAMILY_TABLE2, columns, "S test by weighting scheme", |d| {
        t.s_schemes
            .iter()
            .map(|&scheme| s_test_block(d, t.s_block, t.s_alpha, scheme).into())
            .collect()
    })
}

impl McResultTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn cell(&self, pattern: DeviationPattern, delta: f64, column: &str) -> Option<&f64> {
        let j = self.column(column)?;
        self.rows
            .iter()
            .find(|r| r.pattern == pattern && r.delta == delta)
            .map(|r| &r.rejection[j])
    }

    /// Fixed 4-decimal CSV; one MC standard error column per test.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pattern,delta");
        for c in &self.columns {
            let _ = write!(out, ",{c},{c}_se");
        }
        out.push_str(",failed\n");
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.pattern.label(), r.delta);
            for (p, se) in r.rejection.iter().zip(&r.mc_se) {
                let _ = write!(out, ",{p:.4},{se:.4}");
            }
            let _ = writeln!(out, ",{}", r.failed.iter().sum::<usize>());
        }
        out
    }

    pub fn to_pretty(&self) -> String {
        let mut out = format!(
            "{} ({} replications, seed {})\n",
            self.title, self.replications, self.seed
        );
        let _ = write!(out, "{:<10}{:>7}", "pattern", "delta");
        for c in &self.columns {
            let _ = write!(out, "{c:>12}");
        }
        let _ = writeln!(out, "{:>10}", "mc_se");
        for r in &self.rows {
            let _ = write!(out, "{:<10}{:>7}", r.pattern.label(), r.delta);
            for p in &r.rejection {
                let _ = write!(out, "{p:>12.3}");
            }
            let se = r.mc_se.iter().cloned().fold(0.0, f64::max);
            let _ = writeln!(out, "{se:>10.4}");
        }
        out
    }
}
