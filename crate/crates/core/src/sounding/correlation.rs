//! Circular correlation against a known m-sequence and the per-link gain
//! estimator built on it.

use num_complex::Complex64;

use super::pn::PnSequence;
use crate::{Error, Result};

/// Correlation value per lag `0..len`, normalized by the sequence length.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    values: Vec<Complex64>,
}

impl CorrelationSeries {
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Lag of largest magnitude; the first one wins on ties.
    pub fn peak_lag(&self) -> usize {
        let mut best = 0;
        let mut best_mag = f64::NEG_INFINITY;
        for (lag, v) in self.values.iter().enumerate() {
            let mag = v.norm_sqr();
            if mag > best_mag {
                best = lag;
                best_mag = mag;
            }
        }
        best
    }
}

/// Unnormalized circular autocorrelation `sum_k c_k c_{(k+n) mod N}` in
/// integer arithmetic. For an m-sequence this is `N` at lag 0 and `-1`
/// everywhere else.
pub fn circular_autocorr_raw(x: &PnSequence) -> Vec<i64> {
    let c = x.chips();
    let n = c.len();
    (0..n)
        .map(|lag| {
            (0..n)
                .map(|k| i64::from(c[k]) * i64::from(c[(k + lag) % n]))
                .sum()
        })
        .collect()
}

pub fn circular_autocorr(x: &PnSequence) -> CorrelationSeries {
    let n = x.len() as f64;
    let values = circular_autocorr_raw(x)
        .into_iter()
        .map(|r| Complex64::new(r as f64 / n, 0.0))
        .collect();
    CorrelationSeries { values }
}

/// `R_xy(n) = (1/N) sum_k c_k y_{(k+n) mod N}`.
pub fn cross_correlate(x: &PnSequence, y: &[Complex64]) -> Result<CorrelationSeries> {
    let c = x.chips();
    let n = c.len();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "received block has {} samples, PN period is {n}",
            y.len()
        )));
    }
    let scale = 1.0 / n as f64;
    let values = (0..n)
        .map(|lag| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &ck) in c.iter().enumerate() {
                let v = y[(k + lag) % n];
                if ck > 0 {
                    acc += v;
                } else {
                    acc -= v;
                }
            }
            acc * scale
        })
        .collect();
    Ok(CorrelationSeries { values })
}

/// Link gain from one received PN period.
///
/// For `y = h x` (any circular shift), the correlation is `h` at the peak lag
/// and `-h/N` at every other lag. The estimate subtracts the mean off-peak
/// value and rescales:
///
/// ```text
/// h_hat = N / (N + 1) * (R(peak) - mean_{n != peak} R(n))
/// ```
///
/// which is exact for noiseless input, linear in `y` for a fixed peak lag, and
/// insensitive to a constant offset added to `y`.
pub fn estimate_gain(x: &PnSequence, y: &[Complex64]) -> Result<Complex64> {
    let r = cross_correlate(x, y)?;
    let n = r.len();
    let peak = r.peak_lag();
    let total: Complex64 = r.values().iter().sum();
    let peak_value = r.values()[peak];
    let off_mean = (total - peak_value) / (n - 1) as f64;
    Ok((peak_value - off_mean) * (n as f64 / (n + 1) as f64))
}
