//! Linear quantile regression, min_β Σ ρ_τ(y_i − x_iᵀβ).
//!
//! Solved through its bounded dual LP
//!
//! ```text
//!   max  yᵀd   s.t.  Xᵀd = 0,  τ − 1 ≤ d ≤ τ
//! ```
//!
//! written as `min −yᵀx  s.t.  Xᵀx = (1 − τ)Xᵀ1,  0 ≤ x ≤ 1` with `x = d + 1 − τ`,
//! using a Mehrotra predictor–corrector interior-point method. The equality
//! multipliers are −β. Since `x` stays primal feasible, `yᵀd` is a certified lower
//! bound on the optimal objective, and iteration stops once the primal objective
//! at β is within tolerance of it. A final step snaps β to the basic solution
//! interpolating the rows with the smallest residuals when that is no worse.

use nalgebra::{DMatrix, DVector};

use super::linear::{check_xy, ols_coefficients, with_intercept, LinearCoefficients};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const GAP_TOLERANCE: f64 = 1e-11;
const STEP_FRACTION: f64 = 0.99995;

#[inline]
pub fn pinball(tau: f64, r: f64) -> f64 {
    if r > 0.0 {
        tau * r
    } else {
        (tau - 1.0) * r
    }
}

/// Σ ρ_τ(y_i − [1 x_i]ᵀβ).
pub fn quantile_objective(x: &DMatrix<f64>, y: &[f64], tau: f64, beta: &[f64]) -> f64 {
    let coef = LinearCoefficients {
        beta: beta.to_vec(),
    };
    y.iter()
        .enumerate()
        .map(|(r, yi)| pinball(tau, yi - coef.predict_row(x, r)))
        .sum()
}

#[derive(Debug, Clone)]
pub struct QuantileFit {
    pub coefficients: LinearCoefficients,
    pub objective: f64,
    /// Certified lower bound on the optimal objective.
    pub lower_bound: f64,
    pub iterations: usize,
}

pub fn quantile_coefficients(x: &DMatrix<f64>, y: &[f64], tau: f64) -> Result<QuantileFit> {
    check_xy(x, y)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("tau must lie in (0, 1), got {tau}")));
    }
    let design = with_intercept(x);
    let (n, p) = design.shape();
    if n < p {
        return Err(Error::InvalidInput(format!(
            "quantile regression needs at least {p} rows, got {n}"
        )));
    }
    let yv = DVector::from_column_slice(y);
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);

    // Start: x = (1 − τ)1 is strictly interior and primal feasible; the
    // multipliers start at the least-squares fit.
    let mut xp = DVector::from_element(n, 1.0 - tau);
    let b = design.transpose() * &xp;
    let c = -&yv;
    let ols = ols_coefficients(x, y, None)?;
    let mut lam = -DVector::from_vec(ols.beta);
    let r0 = &c - &design * &lam;
    let delta = (r0.iter().map(|v| v.abs()).sum::<f64>() / n as f64).max(1e-3 * scale);
    let mut z = r0.map(|v| v.max(0.0) + delta);
    let mut w = r0.map(|v| (-v).max(0.0) + delta);

    let mut best: Option<(f64, DVector<f64>)> = None;
    for iter in 0..MAX_ITERATIONS {
        let beta = -&lam;
        let primal = (0..n)
            .map(|i| pinball(tau, y[i] - design.row(i).dot(&beta.transpose())))
            .sum::<f64>();
        let lower = y.iter().zip(xp.iter()).map(|(yi, xi)| yi * (xi - (1.0 - tau))).sum::<f64>();
        if best.as_ref().is_none_or(|(obj, _)| primal < *obj) {
            best = Some((primal, beta.clone()));
        }
        if primal - lower <= GAP_TOLERANCE * (1.0 + primal.abs()) {
            return Ok(finish(&design, y, tau, beta, lower, iter));
        }

        let s = xp.map(|v| 1.0 - v);
        let rp = &b - design.transpose() * &xp;
        let rd = &c - &design * &lam - &z + &w;
        let mu = (xp.dot(&z) + s.dot(&w)) / (2 * n) as f64;

        let dinv = DVector::from_fn(n, |i, _| 1.0 / (z[i] / xp[i] + w[i] / s[i]));
        let mut normal = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let row = design.row(i);
            let di = dinv[i];
            for a in 0..p {
                let ra = row[a] * di;
                for bcol in 0..=a {
                    normal[(a, bcol)] += ra * row[bcol];
                }
            }
        }
        for a in 0..p {
            for bcol in 0..a {
                normal[(bcol, a)] = normal[(a, bcol)];
            }
        }
        let Some(chol) = normal.cholesky() else {
            break;
        };

        let solve = |rxz: &DVector<f64>, rsw: &DVector<f64>| {
            let rhat = DVector::from_fn(n, |i, _| rd[i] - rxz[i] / xp[i] + rsw[i] / s[i]);
            let rhs = &rp + design.transpose() * rhat.component_mul(&dinv);
            let dlam = chol.solve(&rhs);
            let dx = (&design * &dlam - &rhat).component_mul(&dinv);
            let dz = DVector::from_fn(n, |i, _| (rxz[i] - z[i] * dx[i]) / xp[i]);
            let dw = DVector::from_fn(n, |i, _| (rsw[i] + w[i] * dx[i]) / s[i]);
            (dx, dlam, dz, dw)
        };

        // predictor
        let rxz = -xp.component_mul(&z);
        let rsw = -s.component_mul(&w);
        let (dx, _, dz, dw) = solve(&rxz, &rsw);
        let (ap, ad) = step_lengths(&xp, &s, &z, &w, &dx, &dz, &dw);
        let mu_aff = ((&xp + ap * &dx).dot(&(&z + ad * &dz))
            + (&s - ap * &dx).dot(&(&w + ad * &dw)))
            / (2 * n) as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let rxz = DVector::from_fn(n, |i, _| sigma * mu - xp[i] * z[i] - dx[i] * dz[i]);
        let rsw = DVector::from_fn(n, |i, _| sigma * mu - s[i] * w[i] + dx[i] * dw[i]);
        let (dx, dlam, dz, dw) = solve(&rxz, &rsw);
        let (ap, ad) = step_lengths(&xp, &s, &z, &w, &dx, &dz, &dw);
        let (ap, ad) = ((STEP_FRACTION * ap).min(1.0), (STEP_FRACTION * ad).min(1.0));

        xp += ap * dx;
        lam += ad * dlam;
        z += ad * dz;
        w += ad * dw;
        // keep strictly inside the box against round-off
        for v in xp.iter_mut() {
            *v = v.clamp(1e-300, 1.0 - 1e-16);
        }
    }
    let best_objective = best.map(|(obj, _)| obj).unwrap_or(f64::NAN);
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        best_objective,
    })
}

fn step_lengths(
    x: &DVector<f64>,
    s: &DVector<f64>,
    z: &DVector<f64>,
    w: &DVector<f64>,
    dx: &DVector<f64>,
    dz: &DVector<f64>,
    dw: &DVector<f64>,
) -> (f64, f64) {
    let mut ap = f64::INFINITY;
    for i in 0..x.len() {
        if dx[i] < 0.0 {
            ap = ap.min(-x[i] / dx[i]);
        } else if dx[i] > 0.0 {
            ap = ap.min(s[i] / dx[i]);
        }
    }
    let mut ad = f64::INFINITY;
    for i in 0..z.len() {
        if dz[i] < 0.0 {
            ad = ad.min(-z[i] / dz[i]);
        }
        if dw[i] < 0.0 {
            ad = ad.min(-w[i] / dw[i]);
        }
    }
    (ap.min(1.0 / STEP_FRACTION), ad.min(1.0 / STEP_FRACTION))
}

/// Replaces the interior solution with the basic solution through the `p` rows of
/// smallest absolute residual if that basic solution is no worse.
fn finish(
    design: &DMatrix<f64>,
    y: &[f64],
    tau: f64,
    beta: DVector<f64>,
    lower_bound: f64,
    iterations: usize,
) -> QuantileFit {
    let (n, p) = design.shape();
    let objective = |b: &DVector<f64>| {
        (0..n)
            .map(|i| pinball(tau, y[i] - design.row(i).dot(&b.transpose())))
            .sum::<f64>()
    };
    let interior = objective(&beta);
    let mut order: Vec<usize> = (0..n).collect();
    let resid: Vec<f64> = (0..n)
        .map(|i| (y[i] - design.row(i).dot(&beta.transpose())).abs())
        .collect();
    order.sort_by(|&i, &j| resid[i].total_cmp(&resid[j]).then(i.cmp(&j)));

    // Greedily collect p linearly independent rows (Gram–Schmidt on the rows).
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(p);
    let mut rows = Vec::with_capacity(p);
    for &i in &order {
        if rows.len() == p {
            break;
        }
        let mut v = design.row(i).transpose();
        let norm0 = v.norm();
        for q in &basis {
            let proj = q.dot(&v);
            v -= proj * q;
        }
        let norm = v.norm();
        if norm > 1e-9 * norm0.max(1e-300) {
            basis.push(v / norm);
            rows.push(i);
        }
    }

    let mut chosen = beta;
    let mut chosen_obj = interior;
    if rows.len() == p {
        let sub = DMatrix::from_fn(p, p, |r, c| design[(rows[r], c)]);
        let rhs = DVector::from_fn(p, |r, _| y[rows[r]]);
        if let Some(vertex) = sub.lu().solve(&rhs) {
            let vobj = objective(&vertex);
            if vobj <= interior + 1e-12 * (1.0 + interior.abs()) {
                chosen = vertex;
                chosen_obj = vobj;
            }
        }
    }
    QuantileFit {
        coefficients: LinearCoefficients {
            beta: chosen.iter().copied().collect(),
        },
        objective: chosen_obj,
        lower_bound,
        iterations,
    }
}
