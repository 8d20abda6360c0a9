//! Simulated measurement path of the testbed: each transmitter sends one PN
//! period in its own TDMA slot, every receive antenna correlates what it hears
//! against the known chips, and the per-link estimates are assembled into the
//! estimated channel matrix.

mod correlation;
mod pn;
mod schedule;

pub use correlation::{
    circular_autocorr, circular_autocorr_raw, cross_correlate, estimate_gain, CorrelationSeries,
};
pub use pn::{default_taps, gen_pn, PnSequence, PnSpec, DEFAULT_DEGREE, MAX_DEGREE, MIN_DEGREE};
pub use schedule::{build_tdma_schedule, TdmaSchedule};

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::db_to_linear;
use crate::channel::ChannelMatrix;
use crate::rng::RandomSeed;
use crate::{Error, Result};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 1.0e6;

/// Receiver-side impairments applied to every sounded link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentSpec {
    /// Per-antenna SNR with unit-power chips; `+inf` disables noise.
    /// Serialized as `null` when infinite.
    #[serde(with = "snr_db_serde")]
    pub snr_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfo_hz: Option<f64>,
    /// Chip rate, used to turn the CFO into a per-chip phase step.
    pub sample_rate_hz: f64,
}

impl ImpairmentSpec {
    pub fn noiseless() -> Self {
        Self {
            snr_db: f64::INFINITY,
            cfo_hz: None,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }

    pub fn with_snr_db(snr_db: f64) -> Self {
        Self {
            snr_db,
            ..Self::noiseless()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Domain(format!("invalid snr_db {}", self.snr_db)));
        }
        if let Some(cfo) = self.cfo_hz {
            if !cfo.is_finite() {
                return Err(Error::Domain(format!("invalid cfo_hz {cfo}")));
            }
            if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
                return Err(Error::Domain(format!(
                    "sample_rate_hz must be > 0 with CFO, got {}",
                    self.sample_rate_hz
                )));
            }
        }
        Ok(())
    }

    /// Noise variance per chip, `1 / rho`; zero when noiseless.
    fn noise_variance(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            1.0 / db_to_linear(self.snr_db)
        }
    }
}

mod snr_db_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Noise/CFO stream for the link `tx -> rx` within a round seeded by `seed`.
pub fn link_seed(seed: RandomSeed, tx: usize, rx: usize) -> RandomSeed {
    seed.derive(tx as u64).derive(rx as u64)
}

/// Samples one receive antenna records while transmitter `tx` owns the slot.
pub fn received_block(
    gain: Complex64,
    pn: &PnSequence,
    imp: &ImpairmentSpec,
    seed: RandomSeed,
) -> Vec<Complex64> {
    let var = imp.noise_variance();
    let mut rng = seed.rng();
    let sigma = (var).sqrt() * FRAC_1_SQRT_2;
    let step = imp.cfo_hz.map(|f| 2.0 * PI * f / imp.sample_rate_hz);
    pn.chips()
        .iter()
        .enumerate()
        .map(|(t, &c)| {
            let mut v = gain * f64::from(c);
            if var > 0.0 {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                v += Complex64::new(re * sigma, im * sigma);
            }
            if let Some(step) = step {
                v *= Complex64::from_polar(1.0, step * t as f64);
            }
            v
        })
        .collect()
}

/// Sounds one link and returns its gain estimate.
pub fn sound_link(
    gain: Complex64,
    pn: &PnSequence,
    imp: &ImpairmentSpec,
    seed: RandomSeed,
) -> Result<Complex64> {
    estimate_gain(pn, &received_block(gain, pn, imp, seed))
}

/// One full TDMA round over `h_true`; returns the estimated matrix.
///
/// The channel is held fixed for the whole round. Link `tx -> rx` draws its
/// impairments from [`link_seed`]`(seed, tx, rx)`, so the result does not
/// depend on evaluation order.
pub fn simulate_sounding_round(
    h_true: &ChannelMatrix,
    schedule: &TdmaSchedule,
    pn: &PnSequence,
    imp: &ImpairmentSpec,
    seed: RandomSeed,
) -> Result<ChannelMatrix> {
    imp.validate()?;
    if schedule.num_tx() != h_true.cols() {
        return Err(Error::Dimension(format!(
            "schedule has {} transmitters, channel has {} columns",
            schedule.num_tx(),
            h_true.cols()
        )));
    }
    let rows = h_true.rows();
    let links: Vec<(usize, usize)> = schedule
        .slots()
        .into_iter()
        .flat_map(|(_, tx)| (0..rows).map(move |rx| (tx, rx)))
        .collect();
    let estimates: Vec<Complex64> = links
        .par_iter()
        .map(|&(tx, rx)| sound_link(h_true.get(rx, tx), pn, imp, link_seed(seed, tx, rx)))
        .collect::<Result<_>>()?;

    let mut h_est = ChannelMatrix::zeros(rows, h_true.cols())?;
    for (&(tx, rx), est) in links.iter().zip(estimates) {
        h_est.set(rx, tx, est);
    }
    Ok(h_est)
}
