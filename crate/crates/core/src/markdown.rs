//! Ex-post percentage markdown of forecasts, fitted by minimizing a cost
//! function on validation data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{check_pair, CostSpec};

pub const MD_MIN: f64 = -0.5;
pub const MD_MAX: f64 = 0.5;
const COARSE_POINTS: usize = 101;
const TOLERANCE: f64 = 1e-10;

/// A fitted markdown together with the criterion it was fitted against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Markdown {
    pub md: f64,
    pub criterion: CostSpec,
}

impl Markdown {
    pub fn apply(&self, forecasts: &[f64]) -> Vec<f64> {
        scale(forecasts, self.md)
    }
}

fn scale(forecasts: &[f64], md: f64) -> Vec<f64> {
    forecasts.iter().map(|f| f * (1.0 - md)).collect()
}

/// Mean criterion loss of `actuals − forecasts·(1 − md)`.
pub fn markdown_objective(forecasts: &[f64], actuals: &[f64], criterion: &CostSpec, md: f64) -> f64 {
    let n = actuals.len() as f64;
    actuals
        .iter()
        .zip(forecasts)
        .map(|(y, f)| criterion.value(y - f * (1.0 - md)))
        .sum::<f64>()
        / n
}

/// Forecasts multiplied by `1 − md`.
pub fn apply_markdown(forecasts: &[f64], md: f64) -> Result<Vec<f64>> {
    if !(MD_MIN..=MD_MAX).contains(&md) {
        return Err(Error::InvalidInput(format!(
            "markdown {md} outside [{MD_MIN}, {MD_MAX}]"
        )));
    }
    Ok(scale(forecasts, md))
}

/// Markdown in [−0.5, 0.5] minimizing the mean criterion loss on the given
/// forecasts: a 101-point grid locates the basin, golden-section search refines
/// it.
pub fn fit_markdown(forecasts: &[f64], actuals: &[f64], criterion: &CostSpec) -> Result<f64> {
    criterion.validate()?;
    check_pair(actuals, forecasts)?;
    if let Some(i) = forecasts.iter().position(|f| !(*f > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "forecast {} at position {i} is not strictly positive",
            forecasts[i]
        )));
    }
    let obj = |md: f64| markdown_objective(forecasts, actuals, criterion, md);
    let step = (MD_MAX - MD_MIN) / (COARSE_POINTS - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..COARSE_POINTS)
        .map(|i| {
            let md = MD_MIN + step * i as f64;
            (md, obj(md))
        })
        .collect();
    let (lo_v, hi_v) = grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v)));
    if hi_v - lo_v <= f64::EPSILON * hi_v.abs() {
        log::warn!("markdown objective is flat; using md = 0");
        return Ok(0.0);
    }
    let best = grid
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.1.total_cmp(&b.1).then(i.cmp(j)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut lo = grid[best.saturating_sub(1)].0;
    let mut hi = grid[(best + 1).min(COARSE_POINTS - 1)].0;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (obj(c), obj(d));
    while hi - lo > TOLERANCE {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = obj(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = obj(d);
        }
    }
    // the refined point must not lose to any evaluated grid point, md = 0 included
    let mut md = 0.5 * (lo + hi);
    let mut f = obj(md);
    for &(g, v) in &grid {
        if v < f {
            md = g;
            f = v;
        }
    }
    if obj(0.0) <= f {
        md = 0.0;
    }
    Ok(md)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_oracle(f: &[f64], y: &[f64], c: &CostSpec, step: f64) -> f64 {
        let n = ((MD_MAX - MD_MIN) / step).round() as usize;
        let mut best = (0.0, f64::INFINITY);
        for i in 0..=n {
            let md = MD_MIN + step * i as f64;
            let v = markdown_objective(f, y, c, md);
            if v < best.1 {
                best = (md, v);
            }
        }
        best.0
    }

    #[test]
    fn perfect_forecasts_need_no_markdown() {
        let y = [0.4, 0.6, 0.8];
        for c in [CostSpec::qqc(1.0, 1.0).unwrap(), CostSpec::qqc(0.2, 1.0).unwrap()] {
            assert_eq!(fit_markdown(&y, &y, &c).unwrap(), 0.0);
        }
    }

    #[test]
    fn matches_dense_grid() {
        let c = CostSpec::qqc(0.2, 1.0).unwrap();
        let y = [1.0; 4];
        let f = [1.1, 1.1, 0.9, 0.9];
        let md = fit_markdown(&f, &y, &c).unwrap();
        assert!((md - grid_oracle(&f, &y, &c, 1e-6)).abs() < 1e-5);
        assert!(md > 0.0);
    }

    #[test]
    fn apply_and_refit() {
        assert_eq!(apply_markdown(&[100.0], 0.1).unwrap(), vec![90.0]);
        assert_eq!(apply_markdown(&[3.0, 4.0], 0.0).unwrap(), vec![3.0, 4.0]);
        assert!(apply_markdown(&[1.0], 0.6).is_err());
        let c = CostSpec::qqc(0.3, 1.0).unwrap();
        let y = [0.5, 0.7, 0.9, 0.6, 0.4];
        let f = [0.55, 0.65, 0.95, 0.7, 0.38];
        let md = fit_markdown(&f, &y, &c).unwrap();
        let adj = apply_markdown(&f, md).unwrap();
        assert!(fit_markdown(&adj, &y, &c).unwrap().abs() < 1e-4);
    }

    #[test]
    fn rejects_non_positive_forecasts() {
        let c = CostSpec::squared_error();
        assert!(matches!(
            fit_markdown(&[0.5, 0.0], &[0.5, 0.5], &c),
            Err(Error::InvalidInput(_))
        ));
        assert!(fit_markdown(&[0.5], &[0.5, 0.5], &c).is_err());
    }

    #[test]
    fn asymmetric_criterion_marks_down() {
        let c = CostSpec::qqc(0.2, 1.0).unwrap();
        let y = [0.5; 6];
        let f = [0.45, 0.55, 0.48, 0.52, 0.4, 0.6];
        let md = fit_markdown(&f, &y, &c).unwrap();
        assert!(md >= 0.0);
        assert!(markdown_objective(&f, &y, &c, md) <= markdown_objective(&f, &y, &c, 0.0));
    }
}
