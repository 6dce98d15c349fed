//! Seeded synthetic leasing-return data.
//!
//! Each row describes a returned car: age, contract duration, mileage, engine
//! size, horsepower, a customization score and five categorical attributes
//! (lacquer, drive, fuel, gear shift, body style). After first-level-dropped
//! dummy encoding there are 15 feature columns.
//!
//! The target is the resale-to-list-price ratio. Its ground truth is nonlinear:
//! exponential depreciation in age and mileage, a drop for cars past a model
//! redesign (age > 4 years), a saturating horsepower effect and a diesel ×
//! mileage interaction. Gaussian noise is added and the result clipped to
//! `[TARGET_FLOOR, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::io::{ColumnType, RawColumn, RawTable, Schema};
use super::Dataset;
use crate::error::{Error, Result};

pub const TARGET_FLOOR: f64 = 0.01;

const LACQUER: [&str; 2] = ["standard", "special"];
const DRIVE: [&str; 2] = ["2wd", "4wd"];
const FUEL: [&str; 3] = ["petrol", "diesel", "hybrid"];
const GEAR: [&str; 2] = ["manual", "automatic"];
const BODY: [&str; 5] = ["sedan", "estate", "suv", "coupe", "convertible"];
const DURATIONS: [f64; 4] = [12.0, 24.0, 36.0, 48.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub noise_sd: f64,
    /// Linear drift of the price level over row order; 0 disables it.
    pub drift: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 10_000,
            seed: 20_150_301,
            noise_sd: 0.03,
            drift: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Config(format!("synthetic n must be >= 10, got {}", self.n)));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd > 0.0) {
            return Err(Error::Config(format!(
                "noise_sd must be positive, got {}",
                self.noise_sd
            )));
        }
        if !self.drift.is_finite() {
            return Err(Error::Config("drift must be finite".into()));
        }
        Ok(())
    }
}

/// One car before encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Car {
    pub age: f64,
    pub duration: f64,
    pub mileage: f64,
    pub cubic_capacity: f64,
    pub horsepower: f64,
    pub customization: f64,
    pub lacquer: usize,
    pub drive: usize,
    pub fuel: usize,
    pub gear: usize,
    pub body: usize,
}

impl Car {
    fn sample(rng: &mut ChaCha8Rng) -> Car {
        let duration = DURATIONS[rng.random_range(0..DURATIONS.len())];
        let age = duration / 12.0 + rng.random_range(0.0..2.0);
        let annual_km = rng.random_range(8.0..40.0);
        let mileage = annual_km * duration / 12.0 + rng.random_range(0.0..5.0);
        let cubic_capacity = [1400.0, 1600.0, 2000.0, 2500.0, 3000.0][rng.random_range(0..5)]
            + rng.random_range(-50.0..50.0);
        let horsepower = 0.065 * cubic_capacity + rng.random_range(-25.0..45.0);
        Car {
            age,
            duration,
            mileage,
            cubic_capacity,
            horsepower,
            customization: rng.random_range(0.0..10.0),
            lacquer: usize::from(rng.random_bool(0.3)),
            drive: usize::from(rng.random_bool(0.25)),
            fuel: [0, 0, 1, 1, 1, 2][rng.random_range(0..6)],
            gear: usize::from(rng.random_bool(0.6)),
            body: rng.random_range(0..BODY.len()),
        }
    }

    /// Noise-free, unclipped resale ratio.
    pub fn ground_truth(&self) -> f64 {
        let mut ratio = 0.95 * (-0.085 * self.age).exp() * (-0.0045 * self.mileage).exp();
        if self.age > 4.0 {
            ratio -= 0.06;
        }
        ratio += 0.04 * ((self.horsepower - 150.0) / 40.0).tanh();
        ratio += 0.03 * (1.0 - (-self.customization / 3.0).exp());
        ratio += 0.015 * self.lacquer as f64;
        ratio += 0.02 * self.drive as f64 * (self.body == 2) as u8 as f64;
        ratio += 0.02 * self.gear as f64;
        ratio += match self.fuel {
            1 => 0.0009 * self.mileage - 0.03,
            2 => 0.025,
            _ => 0.0,
        };
        ratio += [0.0, -0.01, 0.03, 0.015, 0.025][self.body];
        ratio -= 0.00001 * (self.cubic_capacity - 2000.0).abs();
        ratio
    }
}

fn schema() -> Schema {
    let cat = |levels: &[&str]| {
        ColumnType::Categorical(Some(levels.iter().map(|s| s.to_string()).collect()))
    };
    Schema {
        columns: vec![
            ("age".into(), ColumnType::Numeric),
            ("contract_duration".into(), ColumnType::Numeric),
            ("mileage".into(), ColumnType::Numeric),
            ("cubic_capacity".into(), ColumnType::Numeric),
            ("horsepower".into(), ColumnType::Numeric),
            ("customization".into(), ColumnType::Numeric),
            ("lacquer".into(), cat(&LACQUER)),
            ("drive".into(), cat(&DRIVE)),
            ("fuel".into(), cat(&FUEL)),
            ("gear".into(), cat(&GEAR)),
            ("body".into(), cat(&BODY)),
            ("resale_ratio".into(), ColumnType::Target),
        ],
    }
}

/// Generates the cars, their noise-free targets and the noisy clipped targets.
pub fn synth_cars(config: &SynthConfig) -> Result<(Vec<Car>, Vec<f64>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(1);
    let noise = Normal::new(0.0, config.noise_sd)
        .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
    let n = config.n;
    let mut cars = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for i in 0..n {
        let car = Car::sample(&mut rng);
        let trend = 1.0 + config.drift * (i as f64 / n as f64 - 0.5);
        let y = car.ground_truth() * trend + noise.sample(&mut noise_rng);
        target.push(y.clamp(TARGET_FLOOR, 1.0));
        cars.push(car);
    }
    Ok((cars, target))
}

/// Raw (un-encoded) synthetic table, suitable for CSV export.
pub fn synth_raw(config: &SynthConfig) -> Result<RawTable> {
    let (cars, target) = synth_cars(config)?;
    let num = |f: fn(&Car) -> f64| RawColumn::Numeric(cars.iter().map(f).collect());
    let cat = |f: fn(&Car) -> usize, labels: &[&str]| {
        RawColumn::Categorical(cars.iter().map(|c| labels[f(c)].to_string()).collect())
    };
    Ok(RawTable {
        schema: schema(),
        columns: vec![
            num(|c| c.age),
            num(|c| c.duration),
            num(|c| c.mileage),
            num(|c| c.cubic_capacity),
            num(|c| c.horsepower),
            num(|c| c.customization),
            cat(|c| c.lacquer, &LACQUER),
            cat(|c| c.drive, &DRIVE),
            cat(|c| c.fuel, &FUEL),
            cat(|c| c.gear, &GEAR),
            cat(|c| c.body, &BODY),
        ],
        target,
    })
}

/// Encoded synthetic dataset with 15 feature columns.
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    synth_raw(config)?.encode()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_columns_and_targets_in_range() {
        let ds = synth_generate(&SynthConfig {
            n: 500,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(ds.n_features(), 15);
        assert!(ds.target.iter().all(|&t| t > 0.0 && t <= 1.0));
    }

    #[test]
    fn reproducible() {
        let cfg = SynthConfig {
            n: 100,
            seed: 42,
            ..SynthConfig::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        let c = synth_generate(&SynthConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn vanishing_noise_gives_ground_truth() {
        let cfg = SynthConfig {
            n: 200,
            seed: 5,
            noise_sd: 1e-300,
            drift: 0.0,
        };
        let (cars, target) = synth_cars(&cfg).unwrap();
        for (car, y) in cars.iter().zip(&target) {
            assert_eq!(*y, car.ground_truth().clamp(TARGET_FLOOR, 1.0));
        }
    }

    #[test]
    fn invalid_config() {
        let bad = SynthConfig {
            n: 5,
            ..SynthConfig::default()
        };
        assert!(matches!(synth_generate(&bad), Err(Error::Config(_))));
        let bad = SynthConfig {
            noise_sd: 0.0,
            ..SynthConfig::default()
        };
        assert!(matches!(synth_generate(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn categories_decode() {
        let raw = synth_raw(&SynthConfig {
            n: 50,
            ..SynthConfig::default()
        })
        .unwrap();
        let ds = raw.encode().unwrap();
        let RawColumn::Categorical(fuel) = &raw.columns[8] else {
            panic!("fuel column should be categorical")
        };
        for (row, label) in fuel.iter().enumerate() {
            assert_eq!(ds.decode_category(row, "fuel"), Some(label.as_str()));
        }
    }
}
