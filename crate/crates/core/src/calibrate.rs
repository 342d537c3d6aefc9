//! p-value to e-value calibration with the power calibrator
//! `φ(x) = κ·x^(κ-1)`, its inverse, and data-driven selection of κ.
//!
//! Tuning κ on the same data that drives selection is done exactly as the
//! simulation protocol prescribes. Error-rate guarantees are stated for a
//! fixed κ, so a tuned κ carries no formal guarantee of its own.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::combine::{BasePValueMatrix, PchSpec};
use crate::error::{Error, Result};
use crate::select::{self, ProcedureKind};

/// The power calibrator `φ(x) = κ·x^(κ-1)` for a fixed κ in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    kappa: f64,
}

impl Calibrator {
    pub fn new(kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Calibrator { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `φ(x)` for `x` in (0, 1].
    pub fn phi(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::domain(format!(
                "calibrator argument must lie in (0, 1], got {x}"
            )));
        }
        Ok(self.phi_unchecked(x))
    }

    /// `φ(x)` without the domain check. Arguments outside (0, 1] give
    /// whatever `powf` gives (NaN for negative `x`).
    #[inline]
    pub fn phi_unchecked(&self, x: f64) -> f64 {
        self.kappa * x.powf(self.kappa - 1.0)
    }

    /// `1/φ(x) = x^(1-κ)/κ`, the rejection threshold γ at which `x` starts
    /// to count. Increasing in `x`.
    #[inline]
    pub(crate) fn reciprocal_phi(&self, x: f64) -> f64 {
        x.powf(1.0 - self.kappa) / self.kappa
    }

    /// Preimage of an e-value threshold: the `x` with `φ(x) = threshold`.
    ///
    /// Requires `threshold ≥ κ` so that the preimage lies in (0, 1].
    pub fn inverse(&self, threshold: f64) -> Result<f64> {
        if !(threshold >= self.kappa) || !threshold.is_finite() {
            return Err(Error::domain(format!(
                "threshold {threshold} is below φ(1) = {}",
                self.kappa
            )));
        }
        let gamma = 1.0 / threshold;
        Ok((self.kappa * gamma).powf(1.0 / (1.0 - self.kappa)).min(1.0))
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("kappa must lie in (0, 1), got {kappa}")))
    }
}

/// `φ(x) = κ·x^(κ-1)`.
pub fn phi(x: f64, kappa: f64) -> Result<f64> {
    Calibrator::new(kappa)?.phi(x)
}

/// `φ⁻¹(threshold) = (κγ)^(1/(1-κ))` with `γ = 1/threshold`.
pub fn phi_inverse(threshold: f64, kappa: f64) -> Result<f64> {
    Calibrator::new(kappa)?.inverse(threshold)
}

/// Ordered candidate values for κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct KappaGrid {
    values: Vec<f64>,
}

impl KappaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("kappa grid is empty"));
        }
        for &k in &values {
            check_kappa(k)?;
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("kappa grid must be strictly increasing"));
        }
        Ok(KappaGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Default for KappaGrid {
    /// {0.01, …, 0.09, 0.1, …, 0.9}.
    fn default() -> Self {
        let values = (1..=9)
            .map(|i| i as f64 / 100.0)
            .chain((1..=9).map(|i| i as f64 / 10.0))
            .collect();
        KappaGrid { values }
    }
}

impl TryFrom<Vec<f64>> for KappaGrid {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        KappaGrid::new(values)
    }
}

impl From<KappaGrid> for Vec<f64> {
    fn from(grid: KappaGrid) -> Self {
        grid.values
    }
}

/// A fixed κ, or `auto` to tune it on the data with [`tune_kappa`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "KappaRepr", into = "KappaRepr")]
pub enum KappaChoice {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KappaRepr {
    Value(f64),
    Name(String),
}

impl TryFrom<KappaRepr> for KappaChoice {
    type Error = Error;

    fn try_from(r: KappaRepr) -> Result<Self> {
        match r {
            KappaRepr::Value(k) => {
                check_kappa(k)?;
                Ok(KappaChoice::Fixed(k))
            }
            KappaRepr::Name(s) => s.parse(),
        }
    }
}

impl From<KappaChoice> for KappaRepr {
    fn from(k: KappaChoice) -> Self {
        match k {
            KappaChoice::Auto => KappaRepr::Name("auto".into()),
            KappaChoice::Fixed(v) => KappaRepr::Value(v),
        }
    }
}

impl FromStr for KappaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(KappaChoice::Auto);
        }
        let k: f64 = s
            .parse()
            .map_err(|_| Error::config(format!("kappa must be `auto` or a number, got `{s}`")))?;
        check_kappa(k)?;
        Ok(KappaChoice::Fixed(k))
    }
}

impl fmt::Display for KappaChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KappaChoice::Auto => f.write_str("auto"),
            KappaChoice::Fixed(k) => write!(f, "{k}"),
        }
    }
}

/// Rejection counts over a κ grid together with the selected κ.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaScan {
    pub grid: Vec<f64>,
    pub rejections: Vec<usize>,
    pub selected: f64,
}

/// Smallest grid value attaining the largest count. Ties go to the lower
/// index, so an all-zero scan selects the first grid value.
pub fn smallest_argmax(grid: &[f64], counts: &[usize]) -> f64 {
    debug_assert_eq!(grid.len(), counts.len());
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    grid[best]
}

/// Runs `count_at` for every κ in `grid` and keeps the smallest κ with
/// the most rejections.
pub fn scan_kappa<F>(grid: &KappaGrid, mut count_at: F) -> Result<KappaScan>
where
    F: FnMut(f64) -> Result<usize>,
{
    let rejections = grid
        .values()
        .iter()
        .map(|&k| count_at(k))
        .collect::<Result<Vec<_>>>()?;
    let selected = smallest_argmax(grid.values(), &rejections);
    Ok(KappaScan {
        grid: grid.values().to_vec(),
        rejections,
        selected,
    })
}

/// Re-runs `procedure` at every grid κ and returns the smallest κ that
/// yields the largest number of rejections.
pub fn tune_kappa(
    pmatrix: &BasePValueMatrix,
    spec: &PchSpec,
    grid: &KappaGrid,
    procedure: ProcedureKind,
) -> Result<f64> {
    Ok(scan_kappa_for(pmatrix, spec, grid, procedure)?.selected)
}

/// Like [`tune_kappa`] but keeps the per-κ rejection counts.
pub fn scan_kappa_for(
    pmatrix: &BasePValueMatrix,
    spec: &PchSpec,
    grid: &KappaGrid,
    procedure: ProcedureKind,
) -> Result<KappaScan> {
    if !procedure.uses_kappa() {
        return Err(Error::domain(format!(
            "procedure {procedure} does not use a calibrator"
        )));
    }
    scan_kappa(grid, |kappa| {
        select::run_procedure(pmatrix, spec, procedure, Some(kappa)).map(|r| r.rejected.len())
    })
}
