//! Bartlett-kernel long-run variance.
//!
//! `sigma2 = c_0 + 2 * sum_{l=1..M} ((M - l) / M) * c_l` with demeaned sample
//! autocovariances `c_l = (1/T) * sum_{s=l+1..T} (d_s - mean)(d_{s-l} - mean)`.
//! The divisor is always `T`. A negative kernel sum is truncated to zero and
//! flagged as degenerate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::LossDifferentialSeries;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LrvEstimate {
    pub sigma2: f64,
    pub bandwidth: usize,
    pub autocovariances: Vec<f64>,
    pub degenerate: bool,
}

impl LrvEstimate {
    /// Standard deviation, or `DegenerateVariance` when the estimate is unusable as a divisor.
    pub fn sigma(&self) -> Result<f64> {
        if self.degenerate {
            Err(Error::DegenerateVariance { sigma2: self.sigma2 })
        } else {
            Ok(self.sigma2.sqrt())
        }
    }
}

/// `floor(T^(2/9))`.
pub fn default_bandwidth(len: usize) -> usize {
    // The small nudge keeps exact powers (e.g. 512 = 2^9) from flooring one short.
    ((len as f64).powf(2.0 / 9.0) + 1e-12).floor() as usize
}

/// Sample autocovariances `c_0..c_max_lag` with divisor `T`, around the sample mean.
pub fn autocovariances(values: &[f64], max_lag: usize) -> Vec<f64> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    (0..=max_lag)
        .map(|l| {
            if l >= n {
                return 0.0;
            }
            dev[l..].iter().zip(&dev[..n - l]).map(|(a, b)| a * b).sum::<f64>() / n as f64
        })
        .collect()
}

pub fn bartlett_lrv(series: &LossDifferentialSeries, bandwidth: Option<usize>) -> Result<LrvEstimate> {
    bartlett_lrv_values(series.values(), bandwidth)
}

pub(crate) fn bartlett_lrv_values(values: &[f64], bandwidth: Option<usize>) -> Result<LrvEstimate> {
    let n = values.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { needed: 2, got: n });
    }
    let m = bandwidth.unwrap_or_else(|| default_bandwidth(n));
    if m >= n {
        return Err(Error::BandwidthTooLarge { bandwidth: m, len: n });
    }
    let c = autocovariances(values, m);
    let mut s2 = c[0];
    for (l, cl) in c.iter().enumerate().skip(1) {
        s2 += 2.0 * ((m - l) as f64 / m as f64) * cl;
    }
    // Relative floor: a constant series leaves only rounding noise in c_0.
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let tiny = f64::EPSILON * scale * scale * n as f64;
    let degenerate = s2.is_nan() || s2 <= tiny;
    Ok(LrvEstimate {
        sigma2: if s2 > 0.0 && !degenerate { s2 } else { 0.0 },
        bandwidth: m,
        autocovariances: c,
        degenerate,
    })
}
