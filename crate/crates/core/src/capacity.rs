//! Log-det capacity and Monte-Carlo capacity curves.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMatrix, Ensemble};
use crate::rng::RandomSeed;
use crate::{Error, Result};

/// Common receive SNR `rho`, transmitter count and optional per-user power gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModelParams {
    pub snr: f64,
    pub num_tx: usize,
    /// Diagonal of the power-gain matrix `P`; `None` means identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_gain: Option<Vec<f64>>,
}

impl SignalModelParams {
    pub fn new(snr: f64, num_tx: usize) -> Self {
        Self {
            snr,
            num_tx,
            power_gain: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::Domain(format!(
                "snr must be positive and finite, got {}",
                self.snr
            )));
        }
        if self.num_tx == 0 {
            return Err(Error::Dimension("num_tx must be at least 1".into()));
        }
        if let Some(p) = &self.power_gain {
            if p.len() != self.num_tx {
                return Err(Error::Dimension(format!(
                    "{} power gains for {} transmitters",
                    p.len(),
                    self.num_tx
                )));
            }
            if p.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
                return Err(Error::Domain("power gains must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    fn check_channel(&self, h: &ChannelMatrix) -> Result<()> {
        self.validate()?;
        if h.cols() != self.num_tx {
            return Err(Error::Dimension(format!(
                "channel has {} columns but num_tx = {}",
                h.cols(),
                self.num_tx
            )));
        }
        if !h.is_all_finite() {
            return Err(Error::Numeric("channel contains non-finite entries".into()));
        }
        Ok(())
    }
}

/// `log2 det(I + (rho / N_t) H P H^H)` in bits/s/Hz.
///
/// The determinant is evaluated as a Cholesky log-det of the smaller of the
/// two Gram matrices (`det(I + A B) = det(I + B A)`), so nothing overflows
/// even for large arrays.
pub fn capacity(h: &ChannelMatrix, params: &SignalModelParams) -> Result<f64> {
    params.check_channel(h)?;
    let (rows, cols) = (h.rows(), h.cols());
    let col_scale: Vec<f64> = match &params.power_gain {
        Some(p) => p.iter().map(|g| g.sqrt()).collect(),
        None => vec![1.0; cols],
    };
    let entry = |r: usize, c: usize| h.get(r, c) * col_scale[c];
    let factor = params.snr / cols as f64;

    // Hermitian, stored full row-major
    let (n, mut gram) = if rows <= cols {
        let mut g = vec![Complex64::new(0.0, 0.0); rows * rows];
        for i in 0..rows {
            for j in 0..=i {
                let s: Complex64 = (0..cols).map(|k| entry(i, k) * entry(j, k).conj()).sum();
                g[i * rows + j] = s;
                g[j * rows + i] = s.conj();
            }
        }
        (rows, g)
    } else {
        let mut g = vec![Complex64::new(0.0, 0.0); cols * cols];
        for i in 0..cols {
            for j in 0..=i {
                let s: Complex64 = (0..rows).map(|k| entry(k, i).conj() * entry(k, j)).sum();
                g[i * cols + j] = s;
                g[j * cols + i] = s.conj();
            }
        }
        (cols, g)
    };
    for (idx, z) in gram.iter_mut().enumerate() {
        *z *= factor;
        if idx / n == idx % n {
            *z += 1.0;
        }
    }

    Ok(cholesky_log2det(n, &mut gram)?.max(0.0))
}

/// Base-2 log-determinant of a Hermitian positive-definite matrix, summed
/// over the squared Cholesky pivots. The lower triangle of `a` is overwritten
/// with the factor.
fn cholesky_log2det(n: usize, a: &mut [Complex64]) -> Result<f64> {
    let mut logdet = 0.0;
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= a[j * n + k].norm_sqr();
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Numeric(format!(
                "matrix not positive definite at pivot {j}"
            )));
        }
        let ljj = d.sqrt();
        a[j * n + j] = Complex64::new(ljj, 0.0);
        logdet += d.log2();
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k].conj();
            }
            a[i * n + j] = s / ljj;
        }
    }
    Ok(logdet)
}

/// `y = sqrt(rho) H P^(1/2) s + n` with `n ~ CN(0, I)`; `noise = None` gives
/// the noiseless signal.
pub fn received_signal(
    h: &ChannelMatrix,
    s: &[Complex64],
    params: &SignalModelParams,
    noise: Option<RandomSeed>,
) -> Result<Vec<Complex64>> {
    params.check_channel(h)?;
    if s.len() != h.cols() {
        return Err(Error::Dimension(format!(
            "transmit vector length {} does not match {} columns",
            s.len(),
            h.cols()
        )));
    }
    let amp = params.snr.sqrt();
    let scaled: Vec<Complex64> = match &params.power_gain {
        Some(p) => s.iter().zip(p).map(|(x, g)| x * g.sqrt() * amp).collect(),
        None => s.iter().map(|x| x * amp).collect(),
    };
    let mut y = h.mul_vec(&scaled)?;
    if let Some(seed) = noise {
        let mut rng = seed.rng();
        let std = std::f64::consts::FRAC_1_SQRT_2;
        for v in &mut y {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re * std, im * std);
        }
    }
    Ok(y)
}

/// Mean capacity versus square scheme size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityCurve {
    pub sizes: Vec<usize>,
    pub mean_capacity: Vec<f64>,
    /// Standard error of each mean.
    pub std_err: Vec<f64>,
    pub trials: usize,
    pub snr: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    size: usize,
    mean_capacity_bps_hz: f64,
    std_err: f64,
    trials: usize,
    snr_linear: f64,
}

impl CapacityCurve {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::Dimension("curve has no sizes".into()));
        }
        if self.mean_capacity.len() != self.sizes.len() || self.std_err.len() != self.sizes.len() {
            return Err(Error::Dimension(
                "curve columns have different lengths".into(),
            ));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "curve sizes must be strictly increasing".into(),
            ));
        }
        if self
            .mean_capacity
            .iter()
            .any(|c| !(*c >= 0.0 && c.is_finite()))
        {
            return Err(Error::Domain(
                "curve capacities must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    /// CSV with header `size,mean_capacity_bps_hz,std_err,trials,snr_linear`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for i in 0..self.sizes.len() {
            w.serialize(CurveRow {
                size: self.sizes[i],
                mean_capacity_bps_hz: self.mean_capacity[i],
                std_err: self.std_err[i],
                trials: self.trials,
                snr_linear: self.snr,
            })
            .map_err(|e| Error::Parse(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .clone();
        let expected = [
            "size",
            "mean_capacity_bps_hz",
            "std_err",
            "trials",
            "snr_linear",
        ];
        if headers.iter().ne(expected) {
            return Err(Error::Parse(format!("unexpected curve header {headers:?}")));
        }
        let rows: Vec<CurveRow> = rdr
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        let first = rows
            .first()
            .ok_or_else(|| Error::Parse("curve file has no rows".into()))?;
        let (trials, snr) = (first.trials, first.snr_linear);
        if rows
            .iter()
            .any(|r| r.trials != trials || r.snr_linear != snr)
        {
            return Err(Error::Parse(
                "trials and snr_linear must be constant across rows".into(),
            ));
        }
        let curve = CapacityCurve {
            sizes: rows.iter().map(|r| r.size).collect(),
            mean_capacity: rows.iter().map(|r| r.mean_capacity_bps_hz).collect(),
            std_err: rows.iter().map(|r| r.std_err).collect(),
            trials,
            snr,
        };
        curve.validate()?;
        Ok(curve)
    }
}

/// Averages `capacity` over `trials` fresh `k x k` realizations for each `k`
/// in `sizes`.
///
/// Trial `t` at size `k` uses the stream `seed.derive(k).derive(t)`, so the
/// curve is independent of how the trials are distributed over workers.
pub fn capacity_curve(
    ensemble: &Ensemble,
    sizes: &[usize],
    snr: f64,
    trials: usize,
    seed: RandomSeed,
) -> Result<CapacityCurve> {
    if trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    if sizes.is_empty() {
        return Err(Error::Dimension("sizes must be non-empty".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("sizes must be strictly increasing".into()));
    }
    ensemble.validate()?;

    let mut mean_capacity = Vec::with_capacity(sizes.len());
    let mut std_err = Vec::with_capacity(sizes.len());
    for &k in sizes {
        let params = SignalModelParams::new(snr, k);
        params.validate()?;
        let size_seed = seed.derive(k as u64);
        let samples: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let h = ensemble.realize(k, k, size_seed.derive(t as u64))?;
                capacity(&h, &params)
            })
            .collect::<Result<_>>()?;
        let (mean, se) = mean_and_std_err(&samples);
        mean_capacity.push(mean);
        std_err.push(se);
    }
    Ok(CapacityCurve {
        sizes: sizes.to_vec(),
        mean_capacity,
        std_err,
        trials,
        snr,
    })
}

/// Sample mean and standard error of the mean, summed in index order.
pub fn mean_and_std_err(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Linear SNR from decibels.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
