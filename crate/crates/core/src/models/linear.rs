//! Least squares and ridge regression.
//!
//! Both solve a Householder QR of the intercept-augmented design. Ridge appends
//! `sqrt(lambda) * I` rows for the slope coefficients, so the intercept is never
//! penalized and `lambda = 0` runs exactly the least-squares path.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear coefficients with the intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCoefficients {
    pub beta: Vec<f64>,
}

impl LinearCoefficients {
    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        let mut acc = self.beta[0];
        for (j, b) in self.beta[1..].iter().enumerate() {
            acc += b * x[(row, j)];
        }
        acc
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows()).map(|r| self.predict_row(x, r)).collect()
    }
}

/// `[1 | X]`.
pub(crate) fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = x.shape();
    DMatrix::from_fn(n, m + 1, |r, c| if c == 0 { 1.0 } else { x[(r, c - 1)] })
}

pub(crate) fn check_xy(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows in X but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("no training rows".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite training data".into()));
    }
    Ok(())
}

fn column_label(names: Option<&[String]>, design_col: usize) -> String {
    if design_col == 0 {
        return "(intercept)".into();
    }
    names
        .and_then(|n| n.get(design_col - 1).cloned())
        .unwrap_or_else(|| format!("x{design_col}"))
}

/// Solves min ||A b - y||² by QR; reports columns whose R diagonal vanishes.
fn qr_least_squares(
    design: DMatrix<f64>,
    rhs: DVector<f64>,
    names: Option<&[String]>,
) -> Result<Vec<f64>> {
    let p = design.ncols();
    let qr = design.qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let singular: Vec<String> = (0..p)
        .filter(|&i| r[(i, i)].abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE))
        .map(|i| column_label(names, i))
        .collect();
    if !singular.is_empty() {
        return Err(Error::SingularDesign { columns: singular });
    }
    let mut qty = rhs;
    qr.q_tr_mul(&mut qty);
    let qty = qty.rows(0, p).into_owned();
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign {
            columns: vec!["(triangular solve)".into()],
        })?;
    Ok(beta.iter().copied().collect())
}

pub fn ols_coefficients(
    x: &DMatrix<f64>,
    y: &[f64],
    names: Option<&[String]>,
) -> Result<LinearCoefficients> {
    ridge_coefficients(x, y, 0.0, names)
}

pub fn ridge_coefficients(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    names: Option<&[String]>,
) -> Result<LinearCoefficients> {
    check_xy(x, y)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!("ridge lambda must be >= 0, got {lambda}")));
    }
    let (n, m) = x.shape();
    if lambda == 0.0 && n < m + 1 {
        return Err(Error::InvalidInput(format!(
            "least squares needs more rows than coefficients ({n} rows, {} coefficients)",
            m + 1
        )));
    }
    let extra = if lambda > 0.0 { m } else { 0 };
    let root = lambda.sqrt();
    let design = DMatrix::from_fn(n + extra, m + 1, |r, c| {
        if r < n {
            if c == 0 {
                1.0
            } else {
                x[(r, c - 1)]
            }
        } else if c == r - n + 1 {
            root
        } else {
            0.0
        }
    });
    let rhs = DVector::from_fn(n + extra, |r, _| if r < n { y[r] } else { 0.0 });
    let beta = qr_least_squares(design, rhs, names)?;
    Ok(LinearCoefficients { beta })
}
