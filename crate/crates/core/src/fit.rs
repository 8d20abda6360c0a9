//! Grid search of Vandermonde `(d, alpha)` against a target capacity curve.
//!
//! The score is the mean squared difference of mean capacities over the
//! size grid (the "minimum mean error", MME). Spacings are expressed in
//! units of half a wavelength and angular spreads in degrees, which is how
//! grids are written down; both are converted internally.
//!
//! All candidate curves of one search share the same seed, i.e. the same
//! underlying uniform draws, so neighbouring cells are compared under common
//! random numbers.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::capacity::{capacity_curve, CapacityCurve};
use crate::channel::Ensemble;
use crate::rng::RandomSeed;
use crate::{Error, Result};

/// The `d / (lambda/2)` grid used for the testbed comparison.
pub const TESTBED_D_GRID: [f64; 4] = [1.0, 1.1, 1.2, 1.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitGrid {
    /// Candidate spacings in units of `lambda / 2`.
    pub spacings_halflambda: Vec<f64>,
    /// Candidate half-angles in degrees.
    pub alphas_deg: Vec<f64>,
    pub wavelength: f64,
    pub snr: f64,
    pub trials: usize,
    pub sizes: Vec<usize>,
}

impl FitGrid {
    pub fn validate(&self) -> Result<()> {
        check_increasing("spacings", &self.spacings_halflambda)?;
        check_increasing("alphas", &self.alphas_deg)?;
        if self.spacings_halflambda[0] < 0.0 {
            return Err(Error::Domain("spacings must be >= 0".into()));
        }
        if self.alphas_deg[0] < 0.0 || *self.alphas_deg.last().unwrap() > 90.0 {
            return Err(Error::Domain("alphas must lie in [0, 90] degrees".into()));
        }
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "sizes must be non-empty and strictly increasing".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::Domain("trials must be at least 1".into()));
        }
        Ok(())
    }

    pub fn spacing_m(&self, d_halflambda: f64) -> f64 {
        d_halflambda * self.wavelength / 2.0
    }

    fn ensemble(&self, d_halflambda: f64, alpha_deg: f64) -> Ensemble {
        Ensemble::Vandermonde {
            spacing: self.spacing_m(d_halflambda),
            wavelength: self.wavelength,
            alpha: deg_to_alpha(alpha_deg),
        }
    }

    fn check_target(&self, target: &CapacityCurve) -> Result<()> {
        if target.sizes != self.sizes || target.snr != self.snr {
            return Err(Error::Dimension(
                "target curve sizes/snr do not match the fit grid".into(),
            ));
        }
        Ok(())
    }
}

fn check_increasing(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Domain(format!("{name} grid is empty")));
    }
    if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(format!(
            "{name} grid must be finite and strictly increasing"
        )));
    }
    Ok(())
}

/// Degrees to radians, pinned to `pi/2` at the top of the range.
/// Degrees to radians, pinning 90° exactly to π/2 so that rounding cannot
/// push it past the valid range. Out-of-range inputs are left as is.
pub(crate) fn deg_to_alpha(deg: f64) -> f64 {
    if deg == 90.0 {
        FRAC_PI_2
    } else {
        deg.to_radians()
    }
}

/// Mean squared difference of mean capacities over the shared size grid.
pub fn mme(target: &CapacityCurve, candidate: &CapacityCurve) -> Result<f64> {
    if target.sizes != candidate.sizes {
        return Err(Error::Dimension("curves have different size grids".into()));
    }
    if target.snr != candidate.snr {
        return Err(Error::Dimension(format!(
            "curves were computed at different SNR ({} vs {})",
            target.snr, candidate.snr
        )));
    }
    if target.mean_capacity.len() != target.sizes.len()
        || candidate.mean_capacity.len() != candidate.sizes.len()
        || target.sizes.is_empty()
    {
        return Err(Error::Dimension("malformed curve".into()));
    }
    let sum: f64 = target
        .mean_capacity
        .iter()
        .zip(&candidate.mean_capacity)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(sum / target.sizes.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Meters.
    pub spacing: f64,
    /// Radians.
    pub alpha: f64,
    pub spacing_halflambda: f64,
    pub alpha_deg: f64,
    pub score: f64,
    pub curve: CapacityCurve,
}

/// One row of the score table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub d_over_halflambda: f64,
    pub alpha_deg: f64,
    pub mme: f64,
}

/// A simulated candidate curve for one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub spacing_halflambda: f64,
    pub alpha_deg: f64,
    pub curve: CapacityCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFit {
    pub best: FitResult,
    /// Ordered by `(d, alpha)`.
    pub table: Vec<ScoreRow>,
}

pub fn score_table_csv(rows: &[ScoreRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Simulates the candidate curve of every `(d, alpha)` cell, ordered by `d`
/// then `alpha`.
pub fn simulate_candidates(grid: &FitGrid, seed: RandomSeed) -> Result<Vec<Candidate>> {
    grid.validate()?;
    let mut out = Vec::with_capacity(grid.spacings_halflambda.len() * grid.alphas_deg.len());
    for &d in &grid.spacings_halflambda {
        for &a in &grid.alphas_deg {
            let curve = capacity_curve(
                &grid.ensemble(d, a),
                &grid.sizes,
                grid.snr,
                grid.trials,
                seed,
            )?;
            out.push(Candidate {
                spacing_halflambda: d,
                alpha_deg: a,
                curve,
            });
        }
    }
    Ok(out)
}

/// Scores pre-simulated candidates against `target`. The first minimum in
/// candidate order wins, so ties go to the smaller `d`, then smaller `alpha`.
pub fn fit_candidates(
    target: &CapacityCurve,
    grid: &FitGrid,
    candidates: &[Candidate],
) -> Result<GridFit> {
    grid.check_target(target)?;
    let mut table = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, cand) in candidates.iter().enumerate() {
        let score = mme(target, &cand.curve)?;
        table.push(ScoreRow {
            d_over_halflambda: cand.spacing_halflambda,
            alpha_deg: cand.alpha_deg,
            mme: score,
        });
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((i, score));
        }
    }
    let (idx, score) = best.ok_or_else(|| Error::Domain("no candidates to score".into()))?;
    let c = &candidates[idx];
    Ok(GridFit {
        best: FitResult {
            spacing: grid.spacing_m(c.spacing_halflambda),
            alpha: deg_to_alpha(c.alpha_deg),
            spacing_halflambda: c.spacing_halflambda,
            alpha_deg: c.alpha_deg,
            score,
            curve: c.curve.clone(),
        },
        table,
    })
}

/// Best `alpha` for a fixed spacing `d_halflambda` (units of `lambda/2`).
/// Uses `grid` for wavelength, SNR, trials and sizes; its own spacing and
/// angle lists are ignored.
pub fn fit_alpha(
    target: &CapacityCurve,
    d_halflambda: f64,
    alphas_deg: &[f64],
    grid: &FitGrid,
    seed: RandomSeed,
) -> Result<FitResult> {
    let sub = FitGrid {
        spacings_halflambda: vec![d_halflambda],
        alphas_deg: alphas_deg.to_vec(),
        ..grid.clone()
    };
    sub.validate()?;
    sub.check_target(target)?;
    let candidates = simulate_candidates(&sub, seed)?;
    Ok(fit_candidates(target, &sub, &candidates)?.best)
}

/// Best `(d, alpha)` over the whole grid plus the full score table.
pub fn fit_grid(target: &CapacityCurve, grid: &FitGrid, seed: RandomSeed) -> Result<GridFit> {
    grid.validate()?;
    grid.check_target(target)?;
    let candidates = simulate_candidates(grid, seed)?;
    fit_candidates(target, grid, &candidates)
}
