use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SynthConfig;
use crate::error::{Error, Result};
use crate::models::LibraryConfig;

pub const DEFAULT_SEED: u64 = 20_150_301;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV file to load; the synthetic generator is used when absent.
    pub csv: Option<PathBuf>,
    /// Schema file for `csv`.
    pub schema: Option<PathBuf>,
    pub standardize: bool,
    pub synth: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            csv: None,
            schema: None,
            standardize: true,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub a_grid: Vec<f64>,
    pub b: f64,
    pub max_iterations: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            a_grid: (1..=10).map(|i| i as f64 / 10.0).collect(),
            b: 1.0,
            max_iterations: crate::ensemble::DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RosterConfig {
    pub lin_reg: bool,
    pub qr: bool,
    pub qrnn: bool,
    pub nnac: bool,
    pub mbl: bool,
    pub mbnl: bool,
    pub es_av: bool,
}

impl Default for RosterConfig {
    fn default() -> Self {
        RosterConfig {
            lin_reg: true,
            qr: true,
            qrnn: true,
            nnac: true,
            mbl: true,
            mbnl: true,
            es_av: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; the synthetic data, the split and every model seed derive from it.
    pub seed: u64,
    pub data: DataConfig,
    pub library: LibraryConfig,
    pub sweep: SweepConfig,
    pub roster: RosterConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: DEFAULT_SEED,
            data: DataConfig::default(),
            library: LibraryConfig::default(),
            sweep: SweepConfig::default(),
            roster: RosterConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `key.path = value` in `table`, creating intermediate tables.
fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key '{key}'")));
    }
    let (last, parents) = parts.split_last().expect("non-empty split");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text, then applies `key=value` overrides in order (last wins).
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        for ov in overrides {
            let (key, value) = ov
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{ov}' is not key=value")))?;
            set_dotted(&mut table, key.trim(), parse_override_value(value.trim()))?;
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# config not serializable: {e}\n"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.a_grid.is_empty() {
            return Err(Error::Config("sweep.a_grid is empty".into()));
        }
        if let Some(a) = self.sweep.a_grid.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(Error::Config(format!("asymmetry level {a} outside (0, 1]")));
        }
        if self.sweep.b != 1.0 {
            return Err(Error::Config(format!("sweep.b must be 1, got {}", self.sweep.b)));
        }
        if self.sweep.max_iterations == 0 {
            return Err(Error::Config("sweep.max_iterations must be >= 1".into()));
        }
        if self.data.csv.is_some() != self.data.schema.is_some() {
            return Err(Error::Config("data.csv and data.schema must be given together".into()));
        }
        self.data.synth.validate()?;
        self.library.validate()
    }

    /// Library grids with the augmentation aligned to the sweep's asymmetry levels.
    pub fn effective_library(&self) -> LibraryConfig {
        LibraryConfig {
            augment_a: self.sweep.a_grid.clone(),
            augment_b: self.sweep.b,
            ..self.library.clone()
        }
    }
}
