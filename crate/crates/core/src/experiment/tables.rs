use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    /// One cell per asymmetry level; `None` marks a missing or undefined value.
    pub cells: Vec<Option<f64>>,
}

/// Methods × asymmetry levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub title: String,
    pub a_grid: Vec<f64>,
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn new(title: impl Into<String>, a_grid: &[f64]) -> Self {
        ResultsTable {
            title: title.into(),
            a_grid: a_grid.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, method: impl Into<String>, cells: Vec<Option<f64>>) {
        debug_assert_eq!(cells.len(), self.a_grid.len());
        self.rows.push(ResultRow {
            method: method.into(),
            cells,
        });
    }

    pub fn row(&self, method: &str) -> Option<&[Option<f64>]> {
        self.rows
            .iter()
            .find(|r| r.method == method)
            .map(|r| r.cells.as_slice())
    }

    pub fn cell(&self, method: &str, a: f64) -> Option<f64> {
        let col = self.a_grid.iter().position(|x| *x == a)?;
        self.row(method)?.get(col).copied().flatten()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for a in &self.a_grid {
            let _ = write!(out, ",a={a}");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&csv_field(&r.method));
            for c in &r.cells {
                out.push(',');
                if let Some(v) = c {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(title: impl Into<String>, text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| Error::Schema(format!("results csv: {e}")))?
            .clone();
        let a_grid = header
            .iter()
            .skip(1)
            .map(|h| {
                h.strip_prefix("a=")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Schema(format!("bad results column '{h}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut table = ResultsTable::new(title, &a_grid);
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Schema(format!("results csv: {e}")))?;
            let cells = rec
                .iter()
                .skip(1)
                .map(|c| {
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse()
                            .map(Some)
                            .map_err(|_| Error::Schema(format!("bad results cell '{c}'")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if cells.len() != a_grid.len() {
                return Err(Error::Schema("ragged results csv".into()));
            }
            table.push(rec.get(0).unwrap_or_default(), cells);
        }
        Ok(table)
    }

    /// Aligned plain-text rendering with `decimals` places.
    pub fn to_text(&self, decimals: usize) -> String {
        let width = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{}\n{:width$}", self.title, "method");
        for a in &self.a_grid {
            let _ = write!(out, " {:>12}", format!("a={a}"));
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:width$}", r.method);
            for c in &r.cells {
                match c {
                    Some(v) => {
                        let _ = write!(out, " {v:>12.decimals$}");
                    }
                    None => {
                        let _ = write!(out, " {:>12}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `100·(a − b)/a`: the improvement of `b` over `a`, in percent. `None` when
/// either value is missing or `a` is zero.
pub fn pct_change(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if a != 0.0 => Some(100.0 * (a - b) / a),
        _ => None,
    }
}

/// Cellwise [`pct_change`] of two aligned rows.
pub fn pct_diff(a: &[Option<f64>], b: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "pct_diff shapes differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| pct_change(*x, *y)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = ResultsTable::new("t", &[0.1, 0.5, 1.0]);
        t.push("Lin. Reg.", vec![Some(0.1 + 0.2), None, Some(1e-17)]);
        t.push("a,b", vec![Some(-3.5), Some(7.0), Some(f64::MAX)]);
        let back = ResultsTable::from_csv("t", &t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.cell("a,b", 0.5), Some(7.0));
        assert_eq!(t.cell("Lin. Reg.", 0.5), None);
        assert!(t.to_text(4).contains("Lin. Reg."));
    }

    #[test]
    fn pct_orientation() {
        assert_eq!(pct_diff(&[Some(2.0)], &[Some(2.0)]).unwrap(), vec![Some(0.0)]);
        let v = pct_change(Some(44.60), Some(40.98)).unwrap();
        assert!((v - 8.1166).abs() < 1e-4);
        assert_eq!(pct_change(Some(0.0), Some(1.0)), None);
        assert!(pct_diff(&[None], &[]).is_err());
    }
}
