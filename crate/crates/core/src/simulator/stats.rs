use crate::error::{Error, Result};
use crate::loss::WorkloadStats;

/// Gaussian statistics of a per-second request-rate series.
///
/// Mean, variance with denominator n, and the biased autocovariance
/// `C(l) = Σ_{t<n-l} (x_t - m)(x_{t+l} - m) / n` for lags up to
/// `min(lag_cap, n - 1)`. The biased form keeps the sequence positive
/// semidefinite and bounded by `C(0)`.
pub fn estimate_stats(samples: &[f64], lag_cap: usize) -> Result<WorkloadStats> {
    if samples.is_empty() {
        return Err(Error::EmptySeries);
    }
    if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("samples[{k}]"), "must be finite"));
    }
    let n = samples.len();
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let dev: Vec<f64> = samples.iter().map(|v| v - mean).collect();
    let lags = lag_cap.min(n - 1);
    let mut autocov = Vec::with_capacity(lags + 1);
    for l in 0..=lags {
        let s: f64 = dev[..n - l].iter().zip(&dev[l..]).map(|(a, b)| a * b).sum();
        autocov.push(s / nf);
    }
    autocov[0] = autocov[0].max(0.0);
    let variance = autocov[0];
    if mean == 0.0 {
        return WorkloadStats::new(0.0, 0.0, vec![0.0]);
    }
    // rounding can leave |C(l)| a hair above C(0)
    for c in autocov.iter_mut().skip(1) {
        *c = c.clamp(-variance, variance);
    }
    WorkloadStats::new(mean.max(0.0), variance, autocov)
}
