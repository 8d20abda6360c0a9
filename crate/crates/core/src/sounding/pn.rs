//! Maximal-length (m-sequence) PN generation with a Fibonacci LFSR.
//!
//! Taps are given as the full characteristic polynomial mask, bit `i` being
//! the coefficient of `x^i`; `x^3 + x + 1` is `0b1011`. Both the leading bit
//! (`x^degree`) and the constant term must be set.
//!
//! With register bits `s_n .. s_{n+k-1}` (bit 0 = oldest), each step outputs
//! `s_n` and shifts in `s_{n+k} = XOR of s_{n+i}` over the set low-order taps.
//! Output bits map `0 -> +1`, `1 -> -1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MIN_DEGREE: u32 = 2;
/// Period checks walk the whole state cycle, so the degree is capped.
pub const MAX_DEGREE: u32 = 20;
pub const DEFAULT_DEGREE: u32 = 9;

/// One primitive polynomial per degree, `MIN_DEGREE..=MAX_DEGREE`.
const PRIMITIVE_POLYNOMIALS: [(u32, u32); 19] = [
    (2, (1 << 2) | (1 << 1) | 1),
    (3, (1 << 3) | (1 << 1) | 1),
    (4, (1 << 4) | (1 << 1) | 1),
    (5, (1 << 5) | (1 << 2) | 1),
    (6, (1 << 6) | (1 << 1) | 1),
    (7, (1 << 7) | (1 << 1) | 1),
    (8, (1 << 8) | (1 << 4) | (1 << 3) | (1 << 2) | 1),
    (9, (1 << 9) | (1 << 4) | 1),
    (10, (1 << 10) | (1 << 3) | 1),
    (11, (1 << 11) | (1 << 2) | 1),
    (12, (1 << 12) | (1 << 6) | (1 << 4) | (1 << 1) | 1),
    (13, (1 << 13) | (1 << 4) | (1 << 3) | (1 << 1) | 1),
    (14, (1 << 14) | (1 << 5) | (1 << 3) | (1 << 1) | 1),
    (15, (1 << 15) | (1 << 1) | 1),
    (16, (1 << 16) | (1 << 5) | (1 << 3) | (1 << 2) | 1),
    (17, (1 << 17) | (1 << 3) | 1),
    (18, (1 << 18) | (1 << 7) | 1),
    (19, (1 << 19) | (1 << 5) | (1 << 2) | (1 << 1) | 1),
    (20, (1 << 20) | (1 << 3) | 1),
];

/// Primitive polynomial mask shipped for `degree`, if any.
pub fn default_taps(degree: u32) -> Option<u32> {
    PRIMITIVE_POLYNOMIALS
        .iter()
        .find(|(d, _)| *d == degree)
        .map(|(_, t)| *t)
}

/// Generator parameters; enough to rebuild the chips anywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PnSpec {
    pub degree: u32,
    pub taps: u32,
    pub seed_state: u32,
}

impl PnSpec {
    /// Shipped primitive polynomial for `degree`, register seeded with `1`.
    pub fn with_default_taps(degree: u32) -> Result<Self> {
        let taps = default_taps(degree).ok_or_else(|| {
            Error::Config(format!(
                "no shipped primitive polynomial for degree {degree} \
                 (supported {MIN_DEGREE}..={MAX_DEGREE})"
            ))
        })?;
        Ok(Self {
            degree,
            taps,
            seed_state: 1,
        })
    }

    pub fn generate(&self) -> Result<PnSequence> {
        gen_pn(self.degree, self.taps, self.seed_state)
    }
}

impl Default for PnSpec {
    fn default() -> Self {
        Self {
            degree: DEFAULT_DEGREE,
            taps: default_taps(DEFAULT_DEGREE).unwrap(),
            seed_state: 1,
        }
    }
}

/// A +-1 m-sequence of length `2^degree - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnSequence {
    spec: PnSpec,
    chips: Vec<i8>,
}

impl PnSequence {
    pub fn spec(&self) -> PnSpec {
        self.spec
    }

    pub fn degree(&self) -> u32 {
        self.spec.degree
    }

    pub fn taps(&self) -> u32 {
        self.spec.taps
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn chips(&self) -> &[i8] {
        &self.chips
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.chips
            .iter()
            .map(|&c| Complex64::new(f64::from(c), 0.0))
            .collect()
    }
}

/// Runs the LFSR for one full period from `seed_state`.
///
/// Fails with [`Error::DegenerateSeed`] for a zero register, and with
/// [`Error::Config`] when the taps are malformed or the state cycle is shorter
/// than `2^degree - 1` (the polynomial is not primitive).
pub fn gen_pn(degree: u32, taps: u32, seed_state: u32) -> Result<PnSequence> {
    if !(MIN_DEGREE..=MAX_DEGREE).contains(&degree) {
        return Err(Error::Config(format!(
            "LFSR degree {degree} outside {MIN_DEGREE}..={MAX_DEGREE}"
        )));
    }
    if taps >> degree != 1 {
        return Err(Error::Config(format!(
            "taps {taps:#b} must have x^{degree} as leading term"
        )));
    }
    if taps & 1 == 0 {
        return Err(Error::Config(format!(
            "taps {taps:#b} lack the constant term"
        )));
    }
    if seed_state == 0 {
        return Err(Error::DegenerateSeed);
    }
    let state_mask = (1u32 << degree) - 1;
    if seed_state & !state_mask != 0 {
        return Err(Error::Config(format!(
            "seed state {seed_state:#b} wider than {degree} bits"
        )));
    }

    let feedback = taps & state_mask;
    let period = state_mask as usize;
    let mut chips = Vec::with_capacity(period);
    let mut state = seed_state;
    for step in 1..=period {
        chips.push(if state & 1 == 0 { 1 } else { -1 });
        let bit = (state & feedback).count_ones() & 1;
        state = (state >> 1) | (bit << (degree - 1));
        if state == seed_state && step < period {
            return Err(Error::Config(format!(
                "taps {taps:#b} are not primitive: period {step} < {period}"
            )));
        }
    }
    if state != seed_state {
        return Err(Error::Config(format!(
            "taps {taps:#b} do not give a periodic sequence"
        )));
    }
    Ok(PnSequence {
        spec: PnSpec {
            degree,
            taps,
            seed_state,
        },
        chips,
    })
}
