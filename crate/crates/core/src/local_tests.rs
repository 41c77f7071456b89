//! End-of-sample instability tests.
//!
//! The S test compares the restricted residual(s) at the end of the sample
//! with the empirical distribution of leave-out residuals from the stable
//! part of the sample. Blocks of `k` residuals are collapsed to a scalar via
//! the weighted sum `iota' V^{-1} U`, squared; `V` is the identity or an
//! estimated covariance of `k` consecutive residuals (see [`WeightingScheme`]
//! and [`CovarianceEstimator`]).
//!
//! The MAX procedure compares the largest squared differential in a
//! monitoring window with the largest one in a training window; under an
//! exchangeable null its false-flag rate is `(lambda2 - lambda1) / lambda2`.
//!
//! Conventions:
//! - `q` is the order statistic of rank `ceil((1 - alpha) * m)` of the `m`
//!   reference statistics; rejection requires `S > q` strictly.
//! - Block reference statistics use every start `s = 1..=T-2k+1` (overlapping
//!   blocks); the leave-out mean drops the evaluated block and the final `k`
//!   observations and divides by `T - 2k`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrv::autocovariances;
use crate::series::LossDifferentialSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingScheme {
    /// `V = I`.
    #[default]
    Identity,
    /// Covariance of the restricted residuals over the whole sample.
    RestrictedSigma,
    /// Covariance of the residuals of the stable sample `s <= T - k` only.
    PrechangeSigma,
}

impl WeightingScheme {
    pub const ALL: [WeightingScheme; 3] = [
        WeightingScheme::Identity,
        WeightingScheme::RestrictedSigma,
        WeightingScheme::PrechangeSigma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WeightingScheme::Identity => "identity",
            WeightingScheme::RestrictedSigma => "restricted",
            WeightingScheme::PrechangeSigma => "prechange",
        }
    }
}

impl fmt::Display for WeightingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "I" => Ok(WeightingScheme::Identity),
            "restricted" | "restricted_sigma" => Ok(WeightingScheme::RestrictedSigma),
            "prechange" | "prechange_sigma" => Ok(WeightingScheme::PrechangeSigma),
            other => Err(Error::InvalidParameter(format!("unknown weighting scheme {other:?}"))),
        }
    }
}

/// How a block of residuals is reduced to a scalar statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockForm {
    /// `(iota' V^{-1} U)^2`.
    #[default]
    WeightedSum,
    /// `U' V^{-1} U`.
    Quadratic,
}

/// How the `k x k` weighting matrix is estimated from residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceEstimator {
    /// Average outer product of all overlapping `k`-blocks of residuals.
    ///
    /// Under the restricted scheme the instability block itself enters the
    /// estimate, which is what drains that variant's power for large breaks.
    #[default]
    BlockSample,
    /// Toeplitz matrix of sample autocovariances up to lag `k - 1`.
    Toeplitz,
}

/// Variant knobs of the block S test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BlockOptions {
    pub form: BlockForm,
    pub estimator: CovarianceEstimator,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SOutcome {
    pub statistic: f64,
    pub critical_value: f64,
    pub block_length: usize,
    pub scheme: WeightingScheme,
    pub form: BlockForm,
    pub estimator: CovarianceEstimator,
    pub alpha: f64,
    pub empirical_distribution: Vec<f64>,
    pub reject: bool,
}

/// `(1 - alpha)`-type sample quantile: order statistic of rank `ceil(p * m)`.
pub fn empirical_quantile(mut values: Vec<f64>, p: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    values.sort_by(f64::total_cmp);
    let m = values.len();
    let rank = ((p * m as f64) - 1e-9).ceil().clamp(1.0, m as f64) as usize;
    values[rank - 1]
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")))
    }
}

/// Single-observation S test for instability at `s = T`.
pub fn s_test_single(series: &LossDifferentialSeries, alpha: f64) -> Result<SOutcome> {
    check_alpha(alpha)?;
    let d = series.values();
    let t = d.len();
    if t < 4 {
        return Err(Error::SeriesTooShort { needed: 4, got: t });
    }
    let full_mean = d.iter().sum::<f64>() / t as f64;
    let statistic = (d[t - 1] - full_mean).powi(2);
    let stable_sum: f64 = d[..t - 1].iter().sum();
    let refs: Vec<f64> = d[..t - 1]
        .iter()
        .map(|&ds| {
            let leave_out = (stable_sum - ds) / (t - 2) as f64;
            (ds - leave_out).powi(2)
        })
        .collect();
    Ok(finish(statistic, refs, 1, WeightingScheme::Identity, BlockOptions::default(), alpha))
}

/// Block S test for instability on the final `k` observations.
pub fn s_test_block(
    series: &LossDifferentialSeries,
    k: usize,
    alpha: f64,
    scheme: WeightingScheme,
) -> Result<SOutcome> {
    s_test_block_with(series, k, alpha, scheme, BlockOptions::default())
}

pub fn s_test_block_with(
    series: &LossDifferentialSeries,
    k: usize,
    alpha: f64,
    scheme: WeightingScheme,
    options: BlockOptions,
) -> Result<SOutcome> {
    let form = options.form;
    check_alpha(alpha)?;
    let d = series.values();
    let t = d.len();
    if k == 0 {
        return Err(Error::InvalidParameter("block length must be at least 1".into()));
    }
    if 4 * k > t || t < 3 * k + 2 {
        return Err(Error::BlockTooLong { k, len: t });
    }
    let stable = t - k;

    let estimate = |xs: &[f64]| match options.estimator {
        CovarianceEstimator::Toeplitz => toeplitz(&autocovariances(xs, k - 1)),
        CovarianceEstimator::BlockSample => block_covariance(xs, k),
    };
    let v = match scheme {
        WeightingScheme::Identity => None,
        WeightingScheme::RestrictedSigma => Some(estimate(d)),
        WeightingScheme::PrechangeSigma => Some(estimate(&d[..stable])),
    };
    let reduce = Reducer::new(v, form, k)?;

    let full_mean = d.iter().sum::<f64>() / t as f64;
    let tail: Vec<f64> = d[stable..].iter().map(|x| x - full_mean).collect();
    let statistic = reduce.apply(&tail);

    let stable_sum: f64 = d[..stable].iter().sum();
    let mut block = vec![0.0; k];
    let refs: Vec<f64> = (0..=stable - k)
        .map(|start| {
            let window = &d[start..start + k];
            let leave_out = (stable_sum - window.iter().sum::<f64>()) / (t - 2 * k) as f64;
            for (b, x) in block.iter_mut().zip(window) {
                *b = x - leave_out;
            }
            reduce.apply(&block)
        })
        .collect();
    Ok(finish(statistic, refs, k, scheme, options, alpha))
}

fn finish(
    statistic: f64,
    refs: Vec<f64>,
    k: usize,
    scheme: WeightingScheme,
    options: BlockOptions,
    alpha: f64,
) -> SOutcome {
    let critical_value = empirical_quantile(refs.clone(), 1.0 - alpha);
    SOutcome {
        statistic,
        critical_value,
        block_length: k,
        scheme,
        form: options.form,
        estimator: options.estimator,
        alpha,
        empirical_distribution: refs,
        reject: statistic > critical_value,
    }
}

enum Reducer {
    Sum,
    SumOfSquares,
    Weighted(Vec<f64>),
    Quadratic(Vec<Vec<f64>>),
}

impl Reducer {
    fn new(v: Option<Vec<Vec<f64>>>, form: BlockForm, k: usize) -> Result<Self> {
        Ok(match (v, form) {
            (None, BlockForm::WeightedSum) => Reducer::Sum,
            (None, BlockForm::Quadratic) => Reducer::SumOfSquares,
            (Some(v), BlockForm::WeightedSum) => {
                let inv = invert(v)?;
                // V^{-1} iota; V is symmetric so iota' V^{-1} U = w' U.
                Reducer::Weighted((0..k).map(|i| inv[i].iter().sum()).collect())
            }
            (Some(v), BlockForm::Quadratic) => Reducer::Quadratic(invert(v)?),
        })
    }

    fn apply(&self, u: &[f64]) -> f64 {
        match self {
            Reducer::Sum => u.iter().sum::<f64>().powi(2),
            Reducer::SumOfSquares => u.iter().map(|x| x * x).sum(),
            Reducer::Weighted(w) => w.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().powi(2),
            Reducer::Quadratic(inv) => inv
                .iter()
                .zip(u)
                .map(|(row, ui)| ui * row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
                .sum(),
        }
    }
}

/// `(1/n) * sum_s U_s U_s'` over the `n = len - k + 1` overlapping blocks of demeaned values.
fn block_covariance(xs: &[f64], k: usize) -> Vec<Vec<f64>> {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let dev: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let blocks = dev.len() + 1 - k;
    let mut v = vec![vec![0.0; k]; k];
    for u in dev.windows(k) {
        for i in 0..k {
            for j in 0..k {
                v[i][j] += u[i] * u[j];
            }
        }
    }
    v.iter_mut().flatten().for_each(|x| *x /= blocks as f64);
    v
}

fn toeplitz(c: &[f64]) -> Vec<Vec<f64>> {
    let k = c.len();
    (0..k)
        .map(|i| (0..k).map(|j| c[i.abs_diff(j)]).collect())
        .collect()
}

/// Gauss-Jordan inverse with partial pivoting; small matrices only.
fn invert(mut a: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::SingularWeighting);
    }
    let tol = scale * 1e-12;
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        if a[pivot][col].abs() <= tol {
            return Err(Error::SingularWeighting);
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[i][j] -= f * a[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Ok(inv)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxOutcome {
    pub train_max: f64,
    pub monitor_max: f64,
    /// Number of training observations `T*`.
    pub train_end: usize,
    /// Last monitored observation `E` (1-based).
    pub monitor_end: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    /// `(lambda2 - lambda1) / lambda2`.
    pub size: f64,
    /// `(E - T*) / E`, the exact false-flag rate for exchangeable data.
    pub finite_sample_size: f64,
    pub flag: bool,
}

/// MAX procedure with `T* = floor(lambda1 * T)` and `E = floor(lambda2 * T)`.
pub fn max_procedure(series: &LossDifferentialSeries, lambda1: f64, lambda2: f64) -> Result<MaxOutcome> {
    if !(lambda1 > 0.0 && lambda1 < lambda2 && lambda2 <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < lambda1 < lambda2 <= 1, got ({lambda1}, {lambda2})"
        )));
    }
    let t = series.len() as f64;
    let train_end = (lambda1 * t + 1e-9).floor() as usize;
    let monitor_end = (lambda2 * t + 1e-9).floor() as usize;
    max_core(series, train_end, monitor_end, lambda1, lambda2)
}

/// MAX procedure with explicit 1-based split points.
pub fn max_procedure_split(
    series: &LossDifferentialSeries,
    train_end: usize,
    monitor_end: usize,
) -> Result<MaxOutcome> {
    let t = series.len() as f64;
    max_core(
        series,
        train_end,
        monitor_end,
        train_end as f64 / t,
        monitor_end as f64 / t,
    )
}

fn max_core(
    series: &LossDifferentialSeries,
    train_end: usize,
    monitor_end: usize,
    lambda1: f64,
    lambda2: f64,
) -> Result<MaxOutcome> {
    let d = series.values();
    if train_end < 2 || monitor_end <= train_end || monitor_end > d.len() {
        return Err(Error::InvalidParameter(format!(
            "invalid MAX split: T* = {train_end}, E = {monitor_end}, T = {}",
            d.len()
        )));
    }
    let sq_max = |xs: &[f64]| xs.iter().map(|x| x * x).fold(f64::NEG_INFINITY, f64::max);
    let train_max = sq_max(&d[..train_end]);
    let monitor_max = sq_max(&d[train_end..monitor_end]);
    Ok(MaxOutcome {
        train_max,
        monitor_max,
        train_end,
        monitor_end,
        lambda1,
        lambda2,
        size: (lambda2 - lambda1) / lambda2,
        finite_sample_size: (monitor_end - train_end) as f64 / monitor_end as f64,
        flag: monitor_max > train_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series(v: &[f64]) -> LossDifferentialSeries {
        LossDifferentialSeries::simulated(v.to_vec()).unwrap()
    }

    #[test]
    fn single_hand_example() {
        let out = s_test_single(&series(&[1., 2., 3., 4., 10.]), 0.05).unwrap();
        assert_abs_diff_eq!(out.statistic, 36.0, epsilon = 1e-12);
        let expected = [4.0, 4.0 / 9.0, 4.0 / 9.0, 4.0];
        for (a, b) in out.empirical_distribution.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(out.critical_value, 4.0, epsilon = 1e-12);
        assert!(out.reject);
    }

    #[test]
    fn constant_series_never_rejects() {
        let out = s_test_single(&series(&[2.0; 12]), 0.05).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert!(out.empirical_distribution.iter().all(|&x| x == 0.0));
        assert!(!out.reject);
        let out = s_test_block(&series(&[2.0; 12]), 2, 0.05, WeightingScheme::Identity).unwrap();
        assert!(!out.reject);
    }

    #[test]
    fn quantile_rank_rule() {
        let v: Vec<f64> = (1..=79).map(f64::from).collect();
        // ceil(0.95 * 79) = 76
        assert_eq!(empirical_quantile(v, 0.95), 76.0);
        let v: Vec<f64> = (1..=80).map(f64::from).collect();
        assert_eq!(empirical_quantile(v, 0.95), 76.0);
        assert_eq!(empirical_quantile(vec![3.0, 1.0, 2.0], 0.01), 1.0);
    }

    #[test]
    fn block_k1_identity_matches_single() {
        let d = series(&[0.3, -1.1, 2.4, 0.9, -0.2, 1.7, -0.8, 0.1, 5.0]);
        let a = s_test_single(&d, 0.1).unwrap();
        let b = s_test_block(&d, 1, 0.1, WeightingScheme::Identity).unwrap();
        assert_abs_diff_eq!(a.statistic, b.statistic, epsilon = 1e-12);
        assert_eq!(a.empirical_distribution.len(), b.empirical_distribution.len());
        for (x, y) in a.empirical_distribution.iter().zip(&b.empirical_distribution) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-12);
        }
        assert_eq!(a.critical_value, b.critical_value);
    }

    #[test]
    fn block_brute_force() {
        let v = [0.5, -0.3, 1.2, 0.8, -1.0, 0.4, 0.0, 2.1, -0.6, 0.7, 3.0, 4.0];
        let (t, k) = (v.len(), 2);
        let out = s_test_block(&series(&v), k, 0.05, WeightingScheme::Identity).unwrap();
        let mu: f64 = v.iter().sum::<f64>() / t as f64;
        assert_abs_diff_eq!(out.statistic, ((3.0 - mu) + (4.0 - mu)).powi(2), epsilon = 1e-12);
        assert_eq!(out.empirical_distribution.len(), t - 2 * k + 1);
        for (s, r) in out.empirical_distribution.iter().enumerate() {
            let keep: Vec<f64> = (0..t - k).filter(|j| *j < s || *j >= s + k).map(|j| v[j]).collect();
            assert_eq!(keep.len(), t - 2 * k);
            let m = keep.iter().sum::<f64>() / keep.len() as f64;
            assert_abs_diff_eq!(*r, ((v[s] - m) + (v[s + 1] - m)).powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn weighted_schemes_use_toeplitz_inverse() {
        let v = [0.5, -0.3, 1.2, 0.8, -1.0, 0.4, 0.0, 2.1, -0.6, 0.7, 3.0, 4.0];
        let d = series(&v);
        let toeplitz = BlockOptions { estimator: CovarianceEstimator::Toeplitz, ..Default::default() };
        let out = s_test_block_with(&d, 2, 0.05, WeightingScheme::PrechangeSigma, toeplitz).unwrap();
        let c = autocovariances(&v[..10], 1);
        // 2x2 Toeplitz inverse applied to iota: both weights 1 / (c0 + c1).
        let w = 1.0 / (c[0] + c[1]);
        let mu: f64 = v.iter().sum::<f64>() / 12.0;
        assert_abs_diff_eq!(out.statistic, (w * (3.0 - mu + 4.0 - mu)).powi(2), epsilon = 1e-9);

        let opts = BlockOptions { form: BlockForm::Quadratic, estimator: CovarianceEstimator::Toeplitz };
        let q = s_test_block_with(&d, 2, 0.05, WeightingScheme::RestrictedSigma, opts).unwrap();
        let c = autocovariances(&v, 1);
        let det = c[0] * c[0] - c[1] * c[1];
        let (a, b) = (3.0 - mu, 4.0 - mu);
        let expect = (c[0] * a * a - 2.0 * c[1] * a * b + c[0] * b * b) / det;
        assert_abs_diff_eq!(q.statistic, expect, epsilon = 1e-9);
    }

    #[test]
    fn block_sample_covariance_brute_force() {
        let v = [0.5, -0.3, 1.2, 0.8, -1.0, 0.4, 0.0, 2.1, -0.6, 0.7, 3.0, 4.0];
        let d = series(&v);
        let out = s_test_block(&d, 2, 0.05, WeightingScheme::RestrictedSigma).unwrap();
        let mu: f64 = v.iter().sum::<f64>() / 12.0;
        let u: Vec<f64> = v.iter().map(|x| x - mu).collect();
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for w in u.windows(2) {
            a += w[0] * w[0];
            b += w[0] * w[1];
            c += w[1] * w[1];
        }
        let n = 11.0;
        let (a, b, c) = (a / n, b / n, c / n);
        let det = a * c - b * b;
        // V^{-1} iota for [[a, b], [b, c]].
        let w = [(c - b) / det, (a - b) / det];
        let expect = (w[0] * u[10] + w[1] * u[11]).powi(2);
        assert_abs_diff_eq!(out.statistic, expect, epsilon = 1e-9 * expect.max(1.0));
    }

    #[test]
    fn singular_weighting_is_an_error() {
        assert!(matches!(
            s_test_block(&series(&[1.0; 16]), 3, 0.05, WeightingScheme::RestrictedSigma),
            Err(Error::SingularWeighting)
        ));
    }

    #[test]
    fn block_length_validation() {
        let d = series(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        assert!(matches!(
            s_test_block(&d, 0, 0.05, WeightingScheme::Identity),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            s_test_block(&d, 3, 0.05, WeightingScheme::Identity),
            Err(Error::BlockTooLong { .. })
        ));
        assert!(s_test_block(&d, 2, 0.05, WeightingScheme::Identity).is_ok());
        assert!(s_test_single(&series(&[1.0, 2.0, 3.0]), 0.05).is_err());
    }

    #[test]
    fn max_basic() {
        let mut v: Vec<f64> = (0..20).map(|i| (i % 5) as f64 * 0.1).collect();
        v[18] = 3.0;
        let out = max_procedure(&series(&v), 0.8, 1.0).unwrap();
        assert_eq!((out.train_end, out.monitor_end), (16, 20));
        assert!(out.flag);
        assert_abs_diff_eq!(out.monitor_max, 9.0);
        assert_abs_diff_eq!(out.size, 0.2, epsilon = 1e-12);

        v[2] = -4.0;
        assert!(!max_procedure(&series(&v), 0.8, 1.0).unwrap().flag);
    }

    #[test]
    fn max_split_and_errors() {
        let v: Vec<f64> = (0..83).map(|i| (i as f64).sin()).collect();
        let out = max_procedure_split(&series(&v), 80, 83).unwrap();
        assert_abs_diff_eq!(out.size, 3.0 / 83.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.finite_sample_size, 3.0 / 83.0, epsilon = 1e-12);
        let d = series(&v);
        assert!(max_procedure(&d, 0.5, 0.5).is_err());
        assert!(max_procedure(&d, 0.0, 0.5).is_err());
        assert!(max_procedure(&d, 0.5, 1.2).is_err());
        assert!(max_procedure(&series(&[1.0, 2.0, 3.0]), 0.4, 1.0).is_err());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in WeightingScheme::ALL {
            assert_eq!(s.as_str().parse::<WeightingScheme>().unwrap(), s);
        }
        assert!("foo".parse::<WeightingScheme>().is_err());
    }
}
