//! Channel-matrix ensembles.
//!
//! Three ensembles are provided:
//!
//! - i.i.d. circularly-symmetric complex Gaussian, `CN(0, 1)` per entry;
//! - Vandermonde steering matrices for a uniform linear array, with angles of
//!   arrival drawn uniformly from `(-alpha, alpha)`;
//! - a uniform-phase variant with the same `1/sqrt(N)` modulus as the
//!   Vandermonde model but independent phases.
//!
//! Matrices are stored row-major: row index = receive antenna, column
//! index = transmitter / user.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::RandomSeed;
use crate::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Wavelength in meters for a carrier frequency in Hz.
pub fn wavelength_for(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

/// Complex `rows x cols` matrix of link gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ChannelMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} entries for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(idx) = data
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Numeric(format!(
                "non-finite entry at ({}, {})",
                idx / cols,
                idx % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        Ok(m)
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self> {
        check_dims(rows, cols)?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::from_row_major(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, row: usize) -> &[Complex64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_all_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `self * v`.
    pub fn mul_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector length {} does not match {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `self * Q` for a `cols x k` right factor.
    pub fn mul(&self, rhs: &ChannelMatrix) -> Result<ChannelMatrix> {
        if rhs.rows != self.cols {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        ChannelMatrix::from_fn(self.rows, rhs.cols, |r, c| {
            (0..self.cols).map(|k| self.get(r, k) * rhs.get(k, c)).sum()
        })
    }

    /// Serializes to the text matrix format: a `rows,cols` line followed by
    /// one `row_index,col_index,re,im` line per entry in row-major order.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * self.data.len() + 16);
        let _ = writeln!(out, "{},{}", self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let z = self.get(r, c);
                let _ = writeln!(out, "{r},{c},{:?},{:?}", z.re, z.im);
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("bad header {header:?}: {e}")))?;
        let [rows, cols] = dims[..] else {
            return Err(Error::Parse(format!(
                "header must be rows,cols: {header:?}"
            )));
        };
        check_dims(rows, cols)?;

        let mut data = vec![Complex64::new(0.0, 0.0); rows * cols];
        let mut seen = vec![false; rows * cols];
        for line in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Parse(format!("expected 4 fields: {line:?}")));
            }
            let parse_idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("bad index {s:?}: {e}")))
            };
            let parse_f = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad float {s:?}: {e}")))
            };
            let (r, c) = (parse_idx(fields[0])?, parse_idx(fields[1])?);
            if r >= rows || c >= cols {
                return Err(Error::Parse(format!(
                    "entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if std::mem::replace(&mut seen[r * cols + c], true) {
                return Err(Error::Parse(format!("duplicate entry ({r}, {c})")));
            }
            data[r * cols + c] = Complex64::new(parse_f(fields[2])?, parse_f(fields[3])?);
        }
        if let Some(idx) = seen.iter().position(|s| !s) {
            return Err(Error::Parse(format!(
                "missing entry ({}, {})",
                idx / cols,
                idx % cols
            )));
        }
        Self::from_row_major(rows, cols, data)
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!(
            "matrix must be at least 1x1, got {rows}x{cols}"
        )));
    }
    Ok(())
}

/// Parameters of the Vandermonde channel model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VandermondeParams {
    /// Base-station antennas `M` (rows).
    pub num_antennas: usize,
    /// Single-antenna users `N` (columns).
    pub num_users: usize,
    /// Antenna spacing `d`, meters.
    pub spacing: f64,
    /// Carrier wavelength, meters.
    pub wavelength: f64,
    /// Half-width of the angle-of-arrival interval, radians.
    pub alpha: f64,
}

impl VandermondeParams {
    pub fn validate(&self) -> Result<()> {
        check_dims(self.num_antennas, self.num_users)?;
        if !(self.spacing >= 0.0 && self.spacing.is_finite()) {
            return Err(Error::Domain(format!(
                "spacing must be >= 0, got {}",
                self.spacing
            )));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::Domain(format!(
                "wavelength must be > 0, got {}",
                self.wavelength
            )));
        }
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=FRAC_PI_2).contains(&alpha) {
        return Err(Error::Domain(format!(
            "alpha must lie in [0, pi/2], got {alpha}"
        )));
    }
    Ok(())
}

/// Angles of arrival, radians, one per user.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSet {
    angles: Vec<f64>,
}

impl AngleSet {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if let Some(a) = angles
            .iter()
            .find(|a| !(-FRAC_PI_2..=FRAC_PI_2).contains(*a))
        {
            return Err(Error::Domain(format!("angle {a} outside [-pi/2, pi/2]")));
        }
        Ok(Self { angles })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Draws `n` angles uniformly from `(-alpha, alpha)`.
pub fn sample_angles(alpha: f64, n: usize, seed: RandomSeed) -> Result<AngleSet> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::Dimension("need at least one angle".into()));
    }
    if alpha == 0.0 {
        return Ok(AngleSet {
            angles: vec![0.0; n],
        });
    }
    let mut rng = seed.rng();
    let angles = (0..n)
        .map(|_| alpha * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    Ok(AngleSet { angles })
}

/// Vandermonde steering matrix: entry `(m, n)` is
/// `exp(-j 2 pi m (d / lambda) sin(theta_n)) / sqrt(N)` for `m = 0..M`.
pub fn gen_vandermonde(params: &VandermondeParams, angles: &AngleSet) -> Result<ChannelMatrix> {
    params.validate()?;
    if angles.len() != params.num_users {
        return Err(Error::Dimension(format!(
            "{} angles supplied for {} users",
            angles.len(),
            params.num_users
        )));
    }
    let scale = 1.0 / (params.num_users as f64).sqrt();
    let ratio = params.spacing / params.wavelength;
    let sines: Vec<f64> = angles.as_slice().iter().map(|t| t.sin()).collect();
    ChannelMatrix::from_fn(params.num_antennas, params.num_users, |m, n| {
        Complex64::from_polar(scale, -2.0 * PI * m as f64 * ratio * sines[n])
    })
}

/// i.i.d. `CN(0, 1)` entries.
pub fn gen_gaussian(m: usize, n: usize, seed: RandomSeed) -> Result<ChannelMatrix> {
    check_dims(m, n)?;
    let mut rng = seed.rng();
    ChannelMatrix::from_fn(m, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
    })
}

/// Entries `exp(-j phi) / sqrt(n)` with `phi` i.i.d. uniform on `[0, 2 pi)`.
pub fn gen_uniform_phase(m: usize, n: usize, seed: RandomSeed) -> Result<ChannelMatrix> {
    check_dims(m, n)?;
    let scale = 1.0 / (n as f64).sqrt();
    let mut rng = seed.rng();
    ChannelMatrix::from_fn(m, n, |_, _| {
        let phi = 2.0 * PI * rng.random::<f64>();
        Complex64::from_polar(scale, -phi)
    })
}

/// Which ensemble to draw channel realizations from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Ensemble {
    Gaussian,
    Vandermonde {
        spacing: f64,
        wavelength: f64,
        alpha: f64,
    },
    UniformPhase,
}

impl Ensemble {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Ensemble::Vandermonde {
                spacing,
                wavelength,
                alpha,
            } => VandermondeParams {
                num_antennas: 1,
                num_users: 1,
                spacing,
                wavelength,
                alpha,
            }
            .validate(),
            _ => Ok(()),
        }
    }

    /// One `rows x cols` realization.
    pub fn realize(&self, rows: usize, cols: usize, seed: RandomSeed) -> Result<ChannelMatrix> {
        match *self {
            Ensemble::Gaussian => gen_gaussian(rows, cols, seed),
            Ensemble::UniformPhase => gen_uniform_phase(rows, cols, seed),
            Ensemble::Vandermonde {
                spacing,
                wavelength,
                alpha,
            } => {
                let params = VandermondeParams {
                    num_antennas: rows,
                    num_users: cols,
                    spacing,
                    wavelength,
                    alpha,
                };
                params.validate()?;
                let angles = sample_angles(alpha, cols, seed)?;
                gen_vandermonde(&params, &angles)
            }
        }
    }
}
