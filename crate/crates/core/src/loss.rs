//! Symmetric and asymmetric cost-of-error functions.
//!
//! Residuals are signed as `e = actual - forecast`: a positive residual means the
//! forecast underestimated the actual, and is weighted by `a`; a non-positive
//! residual (overestimation) is weighted by `b`.
//!
//! | family        | C(e)                                                   |
//! |---------------|--------------------------------------------------------|
//! | `SquaredError`| e²                                                     |
//! | `Llc`         | a·\|e\| if e > 0, else b·\|e\|                         |
//! | `Qqc`         | a·e² if e > 0, else b·e²                               |
//! | `Lec`         | b·(exp(a·e) − a·e − 1)                                 |
//! | `Pinball`     | τ·e if e > 0, else (τ − 1)·e                           |
//! | `QqcApprox`   | e²·(σ(e)·(b − a) + a), σ(e) = 1 / (1 + exp(s·e))       |
//!
//! `QqcApprox` is a smooth stand-in for `Qqc`: the logistic term switches the
//! weight from `b` (for e ≪ 0) to `a` (for e ≫ 0) with steepness `s`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default steepness of the logistic switch in [`LossFamily::QqcApprox`].
pub const DEFAULT_STEEPNESS: f64 = 99.0;

/// Beyond this exponent the logistic switch is clamped to 0 or 1.
const EXP_GUARD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossFamily {
    SquaredError,
    Llc,
    Qqc,
    Lec,
    Pinball,
    QqcApprox,
}

impl LossFamily {
    pub const ALL: [LossFamily; 6] = [
        LossFamily::SquaredError,
        LossFamily::Llc,
        LossFamily::Qqc,
        LossFamily::Lec,
        LossFamily::Pinball,
        LossFamily::QqcApprox,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossFamily::SquaredError => "SquaredError",
            LossFamily::Llc => "LLC",
            LossFamily::Qqc => "QQC",
            LossFamily::Lec => "LEC",
            LossFamily::Pinball => "Pinball",
            LossFamily::QqcApprox => "QQCApprox",
        }
    }
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossFamily::ALL
            .into_iter()
            .find(|fam| fam.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown loss family '{s}'")))
    }
}

/// A loss family together with its asymmetry parameters.
///
/// Only the parameters relevant to `family` affect evaluation, but all of them
/// are validated so that a spec can be switched between families safely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub family: LossFamily,
    pub a: f64,
    pub b: f64,
    pub tau: f64,
    pub steepness: f64,
}

impl CostSpec {
    fn build(family: LossFamily, a: f64, b: f64, tau: f64, steepness: f64) -> Result<Self> {
        let spec = CostSpec {
            family,
            a,
            b,
            tau,
            steepness,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn squared_error() -> Self {
        CostSpec {
            family: LossFamily::SquaredError,
            a: 1.0,
            b: 1.0,
            tau: 0.5,
            steepness: DEFAULT_STEEPNESS,
        }
    }

    pub fn llc(a: f64, b: f64) -> Result<Self> {
        Self::build(LossFamily::Llc, a, b, 0.5, DEFAULT_STEEPNESS)
    }

    pub fn qqc(a: f64, b: f64) -> Result<Self> {
        Self::build(LossFamily::Qqc, a, b, 0.5, DEFAULT_STEEPNESS)
    }

    pub fn lec(a: f64, b: f64) -> Result<Self> {
        Self::build(LossFamily::Lec, a, b, 0.5, DEFAULT_STEEPNESS)
    }

    pub fn pinball(tau: f64) -> Result<Self> {
        Self::build(LossFamily::Pinball, 1.0, 1.0, tau, DEFAULT_STEEPNESS)
    }

    pub fn qqc_approx(a: f64, b: f64) -> Result<Self> {
        Self::qqc_approx_with_steepness(a, b, DEFAULT_STEEPNESS)
    }

    pub fn qqc_approx_with_steepness(a: f64, b: f64, steepness: f64) -> Result<Self> {
        Self::build(LossFamily::QqcApprox, a, b, 0.5, steepness)
    }

    /// Builds a spec without checking its invariants. Intended for diagnostics
    /// such as [`validate_generalized_cost`] on deliberately broken parameters.
    pub fn new_unchecked(family: LossFamily, a: f64, b: f64, tau: f64, steepness: f64) -> Self {
        CostSpec {
            family,
            a,
            b,
            tau,
            steepness,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("a", self.a)?;
        positive("b", self.b)?;
        positive("steepness", self.steepness)?;
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!(
                "tau must lie in the open interval (0, 1), got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// Loss value without validation. Callers must have validated the spec and
    /// checked that `e` is finite.
    #[inline]
    pub(crate) fn value(&self, e: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        match self.family {
            LossFamily::SquaredError => e * e,
            LossFamily::Llc => {
                if e > 0.0 {
                    a * e.abs()
                } else {
                    b * e.abs()
                }
            }
            LossFamily::Qqc => {
                if e > 0.0 {
                    a * e * e
                } else {
                    b * e * e
                }
            }
            LossFamily::Lec => {
                let ae = a * e;
                b * (ae.exp() - ae - 1.0)
            }
            LossFamily::Pinball => {
                if e > 0.0 {
                    self.tau * e
                } else {
                    (self.tau - 1.0) * e
                }
            }
            LossFamily::QqcApprox => e * e * self.switch_weight(e),
        }
    }

    /// Derivative dC/de without validation. At the kinks of `Llc` and `Pinball`
    /// the right-derivative is returned.
    #[inline]
    pub(crate) fn derivative(&self, e: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        match self.family {
            LossFamily::SquaredError => 2.0 * e,
            LossFamily::Llc => {
                if e >= 0.0 {
                    a
                } else {
                    -b
                }
            }
            LossFamily::Qqc => {
                if e > 0.0 {
                    2.0 * a * e
                } else {
                    2.0 * b * e
                }
            }
            LossFamily::Lec => b * a * ((a * e).exp() - 1.0),
            LossFamily::Pinball => {
                if e >= 0.0 {
                    self.tau
                } else {
                    self.tau - 1.0
                }
            }
            LossFamily::QqcApprox => {
                let s = self.steepness;
                let sig = logistic_switch(s, e);
                let weight = sig * (b - a) + a;
                let dsig = -s * sig * (1.0 - sig);
                2.0 * e * weight + e * e * (b - a) * dsig
            }
        }
    }

    /// Weight multiplying e² in the smooth QQC approximation; tends to `a` for
    /// large positive residuals and to `b` for large negative ones.
    #[inline]
    fn switch_weight(&self, e: f64) -> f64 {
        logistic_switch(self.steepness, e) * (self.b - self.a) + self.a
    }

    /// Mean loss over paired slices, unchecked.
    pub(crate) fn mean_unchecked(&self, actuals: &[f64], forecasts: &[f64]) -> f64 {
        let total: f64 = actuals
            .iter()
            .zip(forecasts)
            .map(|(y, f)| self.value(y - f))
            .sum();
        total / actuals.len() as f64
    }

    /// Serializes to `key = value` lines. Floats use the shortest representation
    /// that parses back to the identical value.
    pub fn to_kv(&self) -> String {
        format!(
            "family = {}\na = {}\nb = {}\ntau = {}\nsteepness = {}\n",
            self.family, self.a, self.b, self.tau, self.steepness
        )
    }

    /// Parses a `key = value` block. Missing `tau`/`steepness` fall back to 0.5
    /// and the default steepness; missing `a`/`b` fall back to 1.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut family = None;
        let mut spec = CostSpec::squared_error();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let num = || {
                value.parse::<f64>().map_err(|_| {
                    Error::Config(format!("line {}: '{value}' is not a number", lineno + 1))
                })
            };
            match key {
                "family" => family = Some(value.parse::<LossFamily>()?),
                "a" => spec.a = num()?,
                "b" => spec.b = num()?,
                "tau" => spec.tau = num()?,
                "steepness" => spec.steepness = num()?,
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        spec.family = family.ok_or_else(|| Error::Config("missing 'family' key".into()))?;
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            LossFamily::SquaredError => write!(f, "MSE"),
            LossFamily::Pinball => write!(f, "Pinball(tau={})", self.tau),
            LossFamily::QqcApprox => write!(
                f,
                "QQCApprox(a={}, b={}, s={})",
                self.a, self.b, self.steepness
            ),
            fam => write!(f, "{}(a={}, b={})", fam, self.a, self.b),
        }
    }
}

/// `1 / (1 + exp(s·e))`, clamped where the exponent would overflow.
#[inline]
fn logistic_switch(steepness: f64, e: f64) -> f64 {
    let z = steepness * e;
    if z > EXP_GUARD {
        0.0
    } else if z < -EXP_GUARD {
        1.0
    } else {
        1.0 / (1.0 + z.exp())
    }
}

fn check_residual(e: f64) -> Result<()> {
    if e.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("residual must be finite, got {e}")))
    }
}

/// Loss of a single residual `e = actual - forecast`.
pub fn eval_loss(spec: &CostSpec, e: f64) -> Result<f64> {
    spec.validate()?;
    check_residual(e)?;
    Ok(spec.value(e))
}

/// Derivative of the loss with respect to the residual.
pub fn grad_loss(spec: &CostSpec, e: f64) -> Result<f64> {
    spec.validate()?;
    check_residual(e)?;
    Ok(spec.derivative(e))
}

/// Mean loss over residuals `actuals[i] - forecasts[i]` (MSE, MLLC, MQQC, ...).
pub fn eval_mean(spec: &CostSpec, actuals: &[f64], forecasts: &[f64]) -> Result<f64> {
    spec.validate()?;
    check_pair(actuals, forecasts)?;
    Ok(spec.mean_unchecked(actuals, forecasts))
}

pub(crate) fn check_pair(actuals: &[f64], forecasts: &[f64]) -> Result<()> {
    if actuals.is_empty() {
        return Err(Error::InvalidInput("empty input".into()));
    }
    if actuals.len() != forecasts.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} actuals vs {} forecasts",
            actuals.len(),
            forecasts.len()
        )));
    }
    if let Some(i) = actuals
        .iter()
        .chain(forecasts)
        .position(|v| !v.is_finite())
    {
        return Err(Error::InvalidInput(format!(
            "non-finite value at position {i}"
        )));
    }
    Ok(())
}

/// Pinball level reproducing the LLC(a, b) weighting up to scale: `a / (a + b)`.
pub fn tau_from_weights(a: f64, b: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        return Err(Error::Config(format!(
            "weights must be positive and finite, got a={a}, b={b}"
        )));
    }
    Ok(a / (a + b))
}

/// Checks the generalized-cost-function properties on `grid`: zero loss at zero,
/// positive loss elsewhere, and non-decreasing loss in |e| on each side of zero.
///
/// The spec is evaluated as-is, without validation, so broken parameters are
/// reported as `false` rather than rejected.
pub fn validate_generalized_cost(spec: &CostSpec, grid: &[f64]) -> bool {
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(grid.len());
    for &e in grid {
        if !e.is_finite() {
            return false;
        }
        let c = spec.value(e);
        if !c.is_finite() {
            return false;
        }
        if e == 0.0 {
            if c != 0.0 {
                return false;
            }
        } else if c <= 0.0 {
            return false;
        }
        points.push((e, c));
    }
    for side in [1.0_f64, -1.0] {
        let mut branch: Vec<(f64, f64)> = points
            .iter()
            .copied()
            .filter(|(e, _)| e * side > 0.0)
            .collect();
        branch.sort_by(|x, y| x.0.abs().total_cmp(&y.0.abs()));
        if branch.windows(2).any(|w| w[1].1 < w[0].1) {
            return false;
        }
    }
    true
}
