use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{CategoricalEncoding, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnType {
    Numeric,
    /// Optional declared level order; the first level is the dropped reference.
    /// Without declared levels, levels are sorted lexicographically.
    Categorical(Option<Vec<String>>),
    Target,
}

/// Column list read from a schema file of `name:type` lines, where type is
/// `numeric`, `categorical`, `categorical[l1,l2,...]` or `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub columns: Vec<(String, ColumnType)>,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, ty) = line.split_once(':').ok_or_else(|| {
                Error::Schema(format!("line {}: expected 'name:type'", lineno + 1))
            })?;
            let ty = ty.trim();
            let ty = if ty.eq_ignore_ascii_case("numeric") {
                ColumnType::Numeric
            } else if ty.eq_ignore_ascii_case("target") {
                ColumnType::Target
            } else if ty.eq_ignore_ascii_case("categorical") {
                ColumnType::Categorical(None)
            } else if let Some(levels) = ty
                .strip_prefix("categorical[")
                .and_then(|rest| rest.strip_suffix(']'))
            {
                let levels: Vec<String> = levels.split(',').map(|l| l.trim().to_string()).collect();
                if levels.iter().any(String::is_empty) {
                    return Err(Error::Schema(format!("line {}: empty level", lineno + 1)));
                }
                ColumnType::Categorical(Some(levels))
            } else {
                return Err(Error::Schema(format!(
                    "line {}: unknown column type '{ty}'",
                    lineno + 1
                )));
            };
            columns.push((name.trim().to_string(), ty));
        }
        let targets = columns
            .iter()
            .filter(|(_, t)| *t == ColumnType::Target)
            .count();
        if targets != 1 {
            return Err(Error::Schema(format!(
                "schema must name exactly one target column, found {targets}"
            )));
        }
        Ok(Schema { columns })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, ty) in &self.columns {
            let ty = match ty {
                ColumnType::Numeric => "numeric".to_string(),
                ColumnType::Target => "target".to_string(),
                ColumnType::Categorical(None) => "categorical".to_string(),
                ColumnType::Categorical(Some(levels)) => format!("categorical[{}]", levels.join(",")),
            };
            let _ = writeln!(out, "{name}:{ty}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawColumn {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

/// Un-encoded table: one entry per non-target schema column, plus the target.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: Schema,
    pub columns: Vec<RawColumn>,
    pub target: Vec<f64>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    /// Dummy-encodes categorical columns (first level dropped) in schema order.
    pub fn encode(&self) -> Result<Dataset> {
        let n = self.n_rows();
        let mut names = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut categorical_map = Vec::new();
        let feature_schema = self
            .schema
            .columns
            .iter()
            .filter(|(_, t)| *t != ColumnType::Target);
        for ((name, ty), col) in feature_schema.zip(&self.columns) {
            match (ty, col) {
                (ColumnType::Numeric, RawColumn::Numeric(values)) => {
                    names.push(name.clone());
                    cols.push(values.clone());
                }
                (ColumnType::Categorical(declared), RawColumn::Categorical(labels)) => {
                    let levels = match declared {
                        Some(levels) => levels.clone(),
                        None => {
                            let mut levels = labels.clone();
                            levels.sort();
                            levels.dedup();
                            levels
                        }
                    };
                    let mut dummy_columns = Vec::new();
                    for level in levels.iter().skip(1) {
                        dummy_columns.push(cols.len());
                        names.push(format!("{name}_{level}"));
                        cols.push(
                            labels
                                .iter()
                                .map(|l| if l == level { 1.0 } else { 0.0 })
                                .collect(),
                        );
                    }
                    categorical_map.push(CategoricalEncoding {
                        column: name.clone(),
                        levels,
                        dummy_columns,
                    });
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "column '{name}' does not match its declared type"
                    )))
                }
            }
        }
        let features = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
        Dataset::new(features, names, self.target.clone(), categorical_map)
    }

    /// Writes the table as UTF-8 CSV in schema column order.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let header: Vec<&str> = self.schema.columns.iter().map(|(n, _)| n.as_str()).collect();
        writer.write_record(&header).map_err(|e| csv_io(path, e))?;
        for r in 0..self.n_rows() {
            let mut record = Vec::with_capacity(header.len());
            let mut feature = self.columns.iter();
            for (_, ty) in &self.schema.columns {
                if *ty == ColumnType::Target {
                    record.push(self.target[r].to_string());
                    continue;
                }
                match feature.next() {
                    Some(RawColumn::Numeric(v)) => record.push(v[r].to_string()),
                    Some(RawColumn::Categorical(v)) => record.push(v[r].clone()),
                    None => return Err(Error::Schema("schema has more columns than table".into())),
                }
            }
            writer.write_record(&record).map_err(|e| csv_io(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Reads a CSV file whose header matches `schema` (same names, any order) and
/// returns the raw table.
pub fn load_raw_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawTable> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_raw_csv(&bytes, schema)
}

pub(crate) fn parse_raw_csv(bytes: &[u8], schema: &Schema) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let header = reader.headers().map_err(|e| Error::Ingestion {
        row: 1,
        message: e.to_string(),
    })?;
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(Error::Ingestion {
            row: 1,
            message: "missing header row".into(),
        });
    }
    let positions: Vec<usize> = schema
        .columns
        .iter()
        .map(|(name, _)| {
            header.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Ingestion {
                row: 1,
                message: format!("header lacks schema column '{name}'"),
            })
        })
        .collect::<Result<_>>()?;
    if header.len() != schema.columns.len() {
        return Err(Error::Ingestion {
            row: 1,
            message: format!(
                "header has {} columns, schema declares {}",
                header.len(),
                schema.columns.len()
            ),
        });
    }

    let mut columns: Vec<RawColumn> = schema
        .columns
        .iter()
        .filter_map(|(_, ty)| match ty {
            ColumnType::Numeric => Some(RawColumn::Numeric(Vec::new())),
            ColumnType::Categorical(_) => Some(RawColumn::Categorical(Vec::new())),
            ColumnType::Target => None,
        })
        .collect();
    let mut target = Vec::new();

    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Ingestion {
            row,
            message: e.to_string(),
        })?;
        let mut feature = 0;
        for ((name, ty), &pos) in schema.columns.iter().zip(&positions) {
            let token = record.get(pos).unwrap_or("").trim();
            let parse_num = || {
                token.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Ingestion {
                    row,
                    message: format!("column '{name}': '{token}' is not a finite number"),
                })
            };
            match ty {
                ColumnType::Target => target.push(parse_num()?),
                ColumnType::Numeric => {
                    let v = parse_num()?;
                    if let RawColumn::Numeric(col) = &mut columns[feature] {
                        col.push(v);
                    }
                    feature += 1;
                }
                ColumnType::Categorical(declared) => {
                    if token.is_empty() {
                        return Err(Error::Ingestion {
                            row,
                            message: format!("column '{name}': empty category"),
                        });
                    }
                    if let Some(levels) = declared {
                        if !levels.iter().any(|l| l == token) {
                            return Err(Error::Ingestion {
                                row,
                                message: format!("column '{name}': unknown category '{token}'"),
                            });
                        }
                    }
                    if let RawColumn::Categorical(col) = &mut columns[feature] {
                        col.push(token.to_string());
                    }
                    feature += 1;
                }
            }
        }
    }
    if target.is_empty() {
        return Err(Error::Ingestion {
            row: 2,
            message: "file contains no data rows".into(),
        });
    }
    Ok(RawTable {
        schema: schema.clone(),
        columns,
        target,
    })
}

/// Loads and dummy-encodes a CSV file.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::Ingestion {
            row: 0,
            message: format!("file not found: {}", path.display()),
        });
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::Ingestion {
            row: 0,
            message: "empty file".into(),
        });
    }
    parse_raw_csv(&bytes, schema)?.encode()
}
