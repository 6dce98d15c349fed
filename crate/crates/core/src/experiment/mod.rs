//! The asymmetry sweep: library construction, the method roster, ensemble
//! sensitivity variants and report emission.
//!
//! All choices (hyperparameters, ensemble members, markdowns) are made on the
//! validation partition from models fitted on the ATS. The chosen models are
//! then refit on ATS ∪ validation and evaluated once on the test partition.

pub mod config;
mod tables;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

pub use config::{DataConfig, ExperimentConfig, OutputConfig, RosterConfig, SweepConfig, DEFAULT_SEED};
pub use tables::{pct_change, pct_diff, ResultRow, ResultsTable};

use crate::data::synth::TARGET_FLOOR;
use crate::data::{load_csv, split, standardize, synth_generate, DataSplits, Dataset, Schema, SynthConfig, MAX_TARGET};
use crate::ensemble::{ensemble_select, EnsembleModel};
use crate::error::{Error, Result};
use crate::loss::{tau_from_weights, CostSpec};
use crate::markdown::fit_markdown;
use crate::models::library::select_best_predictions;
use crate::models::{build_library, predict, LossMode, ModelLibrary, ModelSpec, Provenance};
use crate::seed::derive_seed;

const SPLIT_STREAM: u64 = 1;
const LIBRARY_STREAM: u64 = 2;

pub const ROSTER_METHODS: [&str; 7] = ["Lin. Reg.", "QR", "QRNN", "NNAC", "MBL", "MBNL", "ES_av"];
pub const ENSEMBLE_METHODS: [&str; 6] = ["ES_mse_s", "ES_md_s", "ES_qqc_s", "ES_mse_a", "ES_md_a", "ES_qqc_a"];

pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match (&config.data.csv, &config.data.schema) {
        (Some(csv), Some(schema)) => load_csv(csv, &Schema::load(schema)?),
        _ => synth_generate(&synth_config(config)),
    }
}

/// Synthetic-data settings with the master seed applied.
pub fn synth_config(config: &ExperimentConfig) -> SynthConfig {
    SynthConfig {
        seed: config.seed,
        ..config.data.synth.clone()
    }
}

pub fn prepare_splits(config: &ExperimentConfig, dataset: &Dataset) -> Result<DataSplits> {
    let splits = split(dataset, derive_seed(config.seed, SPLIT_STREAM))?;
    if config.data.standardize {
        standardize(&splits)
    } else {
        Ok(splits)
    }
}

pub fn library_seed(config: &ExperimentConfig) -> u64 {
    derive_seed(config.seed, LIBRARY_STREAM)
}

fn clip(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.clamp(TARGET_FLOOR, MAX_TARGET)).collect()
}

fn qqc(a: f64, b: f64) -> CostSpec {
    CostSpec::qqc(a, b).expect("validated asymmetry level")
}

/// A forecast built from pool models: the average of `members` (repeats
/// allowed) scaled by `1 − md`.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub members: Vec<usize>,
    pub md: f64,
}

impl Composite {
    fn single(idx: usize) -> Self {
        Composite {
            members: vec![idx],
            md: 0.0,
        }
    }

    fn evaluate<'p>(&self, preds: impl Fn(usize) -> Option<&'p [f64]>) -> Option<Vec<f64>> {
        let first = preds(*self.members.first()?)?;
        let mut sum = vec![0.0; first.len()];
        for &m in &self.members {
            for (s, x) in sum.iter_mut().zip(preds(m)?) {
                *s += x;
            }
        }
        let k = self.members.len() as f64;
        Some(sum.into_iter().map(|s| s / k * (1.0 - self.md)).collect())
    }
}

/// Validation-stage decisions for one method across the asymmetry grid.
#[derive(Debug, Clone)]
struct MethodPlan {
    name: String,
    per_a: Vec<Option<Composite>>,
}

/// Everything produced by a sweep.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub table4: ResultsTable,
    pub table5: ResultsTable,
    pub table6: ResultsTable,
    pub table7: ResultsTable,
    pub figure3: ResultsTable,
    /// Test MQQC of the unadjusted models behind MBL and MBNL.
    pub baselines: ResultsTable,
    /// (method, a, md) for every markdown-based cell.
    pub markdowns: Vec<(String, f64, f64)>,
    pub manifest: String,
    /// (file name, CSV) ensemble selection traces.
    pub traces: Vec<(String, String)>,
}

/// Prepared data and fitted (augmented) library.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub splits: DataSplits,
    pub dataset_hash: String,
    pub library: ModelLibrary,
    /// Library specs followed by any extra specs the roster needs.
    pool: Vec<ModelSpec>,
    val_preds: Vec<Vec<f64>>,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dataset = load_dataset(config)?;
        let splits = prepare_splits(config, &dataset)?;
        let library = build_library(&splits, &config.effective_library(), true, library_seed(config))?;
        Self::with_library(config, &dataset, splits, library)
    }

    /// Uses an already fitted library, which must have been built on `splits`.
    pub fn with_library(
        config: &ExperimentConfig,
        dataset: &Dataset,
        splits: DataSplits,
        library: ModelLibrary,
    ) -> Result<Self> {
        if library.validation_targets != splits.validation.target {
            return Err(Error::Schema(
                "library bundle was fitted on a different validation partition".into(),
            ));
        }
        let mut pool: Vec<ModelSpec> = library.entries.iter().map(|e| e.model.spec.clone()).collect();
        let mut val_preds: Vec<Vec<f64>> = library
            .entries
            .iter()
            .map(|e| clip(&e.validation_predictions))
            .collect();
        if !pool.contains(&ModelSpec::Ols) {
            let model = ModelSpec::Ols.fit(
                &splits.ats.features,
                &splits.ats.target,
                Some(&splits.ats.feature_names),
            )?;
            val_preds.push(clip(&predict(&model, &splits.validation.features)?));
            pool.push(ModelSpec::Ols);
        }
        Ok(Experiment {
            config: config.clone(),
            dataset_hash: dataset.content_hash(),
            splits,
            library,
            pool,
            val_preds,
        })
    }

    fn a_grid(&self) -> &[f64] {
        &self.config.sweep.a_grid
    }

    fn b(&self) -> f64 {
        self.config.sweep.b
    }

    fn y_val(&self) -> &[f64] {
        &self.splits.validation.target
    }

    fn find(&self, pred: impl Fn(&ModelSpec) -> bool) -> Vec<usize> {
        (0..self.pool.len()).filter(|&i| pred(&self.pool[i])).collect()
    }

    /// Pool index among `candidates` with the lowest validation loss.
    fn best_of(&self, candidates: &[usize], criterion: &CostSpec) -> Option<usize> {
        let preds: Vec<&[f64]> = candidates.iter().map(|&i| self.val_preds[i].as_slice()).collect();
        select_best_predictions(&preds, self.y_val(), criterion)
            .ok()
            .map(|j| candidates[j])
    }

    fn markdown_plan(&self, name: &str, inner: Option<Composite>) -> MethodPlan {
        let per_a = self
            .a_grid()
            .iter()
            .map(|&a| {
                let c = inner.clone()?;
                let val = c.evaluate(|i| Some(self.val_preds[i].as_slice()))?;
                match fit_markdown(&val, self.y_val(), &qqc(a, self.b())) {
                    Ok(md) => Some(Composite { md, ..c }),
                    Err(e) => {
                        log::warn!("{name} at a={a}: {e}");
                        None
                    }
                }
            })
            .collect();
        MethodPlan {
            name: name.to_string(),
            per_a,
        }
    }

    fn constant_plan(&self, name: &str, c: Option<Composite>) -> MethodPlan {
        if c.is_none() {
            log::warn!("{name}: no eligible model; cells left missing");
        }
        MethodPlan {
            name: name.to_string(),
            per_a: vec![c; self.a_grid().len()],
        }
    }

    fn roster_plans(&self) -> Vec<MethodPlan> {
        let r = &self.config.roster;
        let b = self.b();
        let mse = CostSpec::squared_error();
        let mut plans = Vec::new();
        if r.lin_reg {
            let ols = self.find(|s| *s == ModelSpec::Ols).first().map(|&i| Composite::single(i));
            plans.push(self.constant_plan("Lin. Reg.", ols));
        }
        let per_level = |name: &str, pick: &(dyn Fn(f64) -> Option<usize> + Sync)| MethodPlan {
            name: name.to_string(),
            per_a: self
                .a_grid()
                .par_iter()
                .map(|&a| {
                    let c = pick(a).map(Composite::single);
                    if c.is_none() {
                        log::warn!("{name} at a={a}: no eligible model");
                    }
                    c
                })
                .collect(),
        };
        if r.qr {
            plans.push(per_level("QR", &|a| {
                let tau = tau_from_weights(a, b).ok()?;
                self.find(|s| *s == ModelSpec::QuantileReg { tau }).first().copied()
            }));
        }
        if r.qrnn {
            plans.push(per_level("QRNN", &|a| {
                let tau = tau_from_weights(a, b).ok()?;
                let cands = self.find(|s| {
                    matches!(s, ModelSpec::NeuralNet { loss_mode: LossMode::Pinball { tau: t }, .. } if *t == tau)
                });
                self.best_of(&cands, &qqc(a, b))
            }));
        }
        if r.nnac {
            plans.push(per_level("NNAC", &|a| {
                let cands = self.find(|s| {
                    matches!(s, ModelSpec::NeuralNet { loss_mode: LossMode::QqcApprox { a: x, b: y }, .. } if *x == a && *y == b)
                });
                self.best_of(&cands, &qqc(a, b))
            }));
        }
        let symmetric = |linear: bool| {
            self.find(|s| s.provenance() == Provenance::Symmetric && s.family().is_linear() == linear)
        };
        if r.mbl {
            let best = self.best_of(&symmetric(true), &mse).map(Composite::single);
            plans.push(self.markdown_plan("MBL", best));
        }
        if r.mbnl {
            let best = self.best_of(&symmetric(false), &mse).map(Composite::single);
            plans.push(self.markdown_plan("MBNL", best));
        }
        plans
    }

    fn select(&self, subset: &[usize], criterion: &CostSpec) -> Option<(Composite, EnsembleModel)> {
        let preds: Vec<&[f64]> = subset.iter().map(|&i| self.val_preds[i].as_slice()).collect();
        match ensemble_select(&preds, self.y_val(), criterion, self.config.sweep.max_iterations) {
            Ok(e) => Some((
                Composite {
                    members: e.members.iter().map(|&j| subset[j]).collect(),
                    md: 0.0,
                },
                e,
            )),
            Err(err) => {
                log::warn!("ensemble selection failed: {err}");
                None
            }
        }
    }

    /// ES_mse / ES_md / ES_qqc for one library, plus the MSE selection trace.
    fn ensemble_plans(&self, suffix: &str, subset: &[usize]) -> (Vec<MethodPlan>, Option<String>) {
        let b = self.b();
        let mse = self.select(subset, &CostSpec::squared_error());
        let trace = mse.as_ref().map(|(_, e)| e.trace_csv());
        let mse_c = mse.map(|(c, _)| c);
        let es_mse = self.constant_plan(&format!("ES_mse_{suffix}"), mse_c.clone());
        let es_md = self.markdown_plan(&format!("ES_md_{suffix}"), mse_c);
        let es_qqc = MethodPlan {
            name: format!("ES_qqc_{suffix}"),
            per_a: self
                .a_grid()
                .par_iter()
                .map(|&a| self.select(subset, &qqc(a, b)).map(|(c, _)| c))
                .collect(),
        };
        (vec![es_mse, es_md, es_qqc], trace)
    }

    /// Refits the needed pool models on ATS ∪ validation and forecasts the test set.
    fn test_predictions(&self, needed: &BTreeSet<usize>) -> Vec<Option<Vec<f64>>> {
        let ft = &self.splits.full_train;
        let needed: Vec<usize> = needed.iter().copied().collect();
        let fitted: Vec<(usize, Option<Vec<f64>>)> = needed
            .par_iter()
            .map(|&i| {
                let r = self.pool[i]
                    .fit(&ft.features, &ft.target, Some(&ft.feature_names))
                    .and_then(|m| predict(&m, &self.splits.test.features));
                match r {
                    Ok(p) => (i, Some(clip(&p))),
                    Err(e) => {
                        log::warn!("refit of {} failed: {e}", self.pool[i].label());
                        (i, None)
                    }
                }
            })
            .collect();
        let mut out = vec![None; self.pool.len()];
        for (i, p) in fitted {
            out[i] = p;
        }
        out
    }

    fn score_row(&self, plan: &MethodPlan, preds: &[Option<Vec<f64>>]) -> (Vec<Option<f64>>, Vec<Option<Vec<f64>>>) {
        let y = &self.splits.test.target;
        let b = self.b();
        let forecasts: Vec<Option<Vec<f64>>> = plan
            .per_a
            .iter()
            .map(|c| c.as_ref().and_then(|c| c.evaluate(|i| preds[i].as_deref())))
            .collect();
        let cells = forecasts
            .iter()
            .zip(self.a_grid())
            .map(|(f, &a)| f.as_ref().map(|f| qqc(a, b).mean_unchecked(y, f)))
            .collect();
        (cells, forecasts)
    }

    /// Runs every method and builds all report tables.
    pub fn run(&self) -> Result<SweepOutput> {
        let a_grid = self.a_grid().to_vec();
        let b = self.b();
        let roster = self.roster_plans();
        let symmetric: Vec<usize> = self.find(|s| s.provenance() == Provenance::Symmetric);
        let all: Vec<usize> = (0..self.library.len()).collect();
        let (mut ensembles, trace_s) = self.ensemble_plans("s", &symmetric);
        let (ens_a, trace_a) = self.ensemble_plans("a", &all);
        ensembles.extend(ens_a);

        let needed: BTreeSet<usize> = roster
            .iter()
            .chain(&ensembles)
            .flat_map(|p| p.per_a.iter().flatten().flat_map(|c| c.members.iter().copied()))
            .collect();
        log::info!("refitting {} models on ATS + validation", needed.len());
        let preds = self.test_predictions(&needed);

        let mut table4 = ResultsTable::new("Linear vs. nonlinear methods (MQQC)", &a_grid);
        let mut asym_forecasts: Vec<Vec<Option<Vec<f64>>>> = Vec::new();
        for plan in &roster {
            let (cells, forecasts) = self.score_row(plan, &preds);
            if plan.name != "Lin. Reg." {
                asym_forecasts.push(forecasts);
            }
            table4.push(plan.name.clone(), cells);
        }
        if self.config.roster.es_av {
            let y = &self.splits.test.target;
            let cells = (0..a_grid.len())
                .map(|col| {
                    let members: Vec<&Vec<f64>> = asym_forecasts.iter().filter_map(|f| f[col].as_ref()).collect();
                    if members.is_empty() || members.len() < asym_forecasts.len() {
                        return None;
                    }
                    let avg = crate::ensemble::simple_average(&members).ok()?;
                    Some(qqc(a_grid[col], b).mean_unchecked(y, &avg))
                })
                .collect();
            table4.push("ES_av", cells);
        }

        let mut baselines = ResultsTable::new("Models before markdown (MQQC)", &a_grid);
        for plan in roster.iter().filter(|p| p.name.starts_with("MB")) {
            let inner = MethodPlan {
                name: format!("{} inner", plan.name),
                per_a: plan
                    .per_a
                    .iter()
                    .map(|c| c.as_ref().map(|c| Composite { md: 0.0, ..c.clone() }))
                    .collect(),
            };
            baselines.push(inner.name.clone(), self.score_row(&inner, &preds).0);
        }
        let markdowns = roster
            .iter()
            .chain(&ensembles)
            .filter(|p| p.name.starts_with("MB") || p.name.starts_with("ES_md"))
            .flat_map(|p| {
                p.per_a
                    .iter()
                    .zip(&a_grid)
                    .filter_map(|(c, &a)| c.as_ref().map(|c| (p.name.clone(), a, c.md)))
            })
            .collect();

        let mut table5 = ResultsTable::new("Ensemble sensitivity (MQQC)", &a_grid);
        for plan in &ensembles {
            table5.push(plan.name.clone(), self.score_row(plan, &preds).0);
        }

        let row = |t: &ResultsTable, m: &str| t.row(m).map(<[_]>::to_vec).unwrap_or_else(|| vec![None; a_grid.len()]);
        let mut table6 = ResultsTable::new("Symmetric vs. augmented library (% improvement)", &a_grid);
        for (label, kind) in [("MSE", "mse"), ("MD", "md"), ("QQC", "qqc")] {
            let s = row(&table5, &format!("ES_{kind}_s"));
            let a = row(&table5, &format!("ES_{kind}_a"));
            table6.push(label, pct_diff(&s, &a)?);
        }
        let mut table7 = ResultsTable::new("Selection criteria (% improvement)", &a_grid);
        for (from, to) in [("mse", "md"), ("mse", "qqc"), ("md", "qqc")] {
            for (lib, name) in [("s", "Symmetric"), ("a", "Augmented")] {
                let x = row(&table5, &format!("ES_{from}_{lib}"));
                let y = row(&table5, &format!("ES_{to}_{lib}"));
                table7.push(
                    format!("{} vs. {} ({name})", from.to_uppercase(), to.to_uppercase()),
                    pct_diff(&x, &y)?,
                );
            }
        }
        let mut figure3 = ResultsTable::new("Best individual model vs. ensembles", &a_grid);
        let qrnn = row(&table4, "QRNN");
        let es_av = row(&table4, "ES_av");
        let es_qqc_a = row(&table5, "ES_qqc_a");
        figure3.push("QRNN", qrnn.clone());
        figure3.push("ES_av", es_av.clone());
        figure3.push("ES_qqc_a", es_qqc_a.clone());
        figure3.push("ES_av vs. QRNN (%)", pct_diff(&qrnn, &es_av)?);
        figure3.push("ES_qqc_a vs. QRNN (%)", pct_diff(&qrnn, &es_qqc_a)?);

        let manifest = self.manifest(&roster, &ensembles);
        let mut traces = Vec::new();
        if let Some(t) = trace_s {
            traces.push(("trace_es_mse_s.csv".to_string(), t));
        }
        if let Some(t) = trace_a {
            traces.push(("trace_es_mse_a.csv".to_string(), t));
        }
        Ok(SweepOutput {
            table4,
            table5,
            table6,
            table7,
            figure3,
            baselines,
            markdowns,
            manifest,
            traces,
        })
    }

    /// Validation-stage decisions only (members, markdowns), without touching
    /// the test partition.
    pub fn selection_manifest(&self) -> String {
        let roster = self.roster_plans();
        let symmetric: Vec<usize> = self.find(|s| s.provenance() == Provenance::Symmetric);
        let all: Vec<usize> = (0..self.library.len()).collect();
        let (mut ensembles, _) = self.ensemble_plans("s", &symmetric);
        ensembles.extend(self.ensemble_plans("a", &all).0);
        self.manifest(&roster, &ensembles)
    }

    fn describe(&self, c: &Composite) -> String {
        let mut counts: Vec<(usize, usize)> = Vec::new();
        for &m in &c.members {
            match counts.iter_mut().find(|(i, _)| *i == m) {
                Some((_, n)) => *n += 1,
                None => counts.push((m, 1)),
            }
        }
        counts.sort_unstable();
        let k = c.members.len();
        counts
            .iter()
            .map(|(i, n)| format!("[{i}] {} x {n}/{k}", self.pool[*i].label()))
            .collect::<Vec<_>>()
            .join("; ")
    }

    fn manifest(&self, roster: &[MethodPlan], ensembles: &[MethodPlan]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "asymcost {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "seed: {}", self.config.seed);
        let _ = writeln!(out, "dataset_hash: {}", self.dataset_hash);
        let _ = writeln!(
            out,
            "rows: ats={} validation={} test={}",
            self.splits.ats.n_rows(),
            self.splits.validation.n_rows(),
            self.splits.test.n_rows()
        );
        let n_sym = self
            .library
            .entries
            .iter()
            .filter(|e| e.provenance() == Provenance::Symmetric)
            .count();
        let _ = writeln!(
            out,
            "library: {} models ({n_sym} symmetric, {} asymmetric)",
            self.library.len(),
            self.library.len() - n_sym
        );
        let _ = writeln!(out, "\n[markdown]");
        for plan in roster.iter().chain(ensembles) {
            if !(plan.name.starts_with("MB") || plan.name.starts_with("ES_md")) {
                continue;
            }
            for (c, a) in plan.per_a.iter().zip(self.a_grid()) {
                if let Some(c) = c {
                    let _ = writeln!(out, "{} a={a} md={:.6}", plan.name, c.md);
                }
            }
        }
        let _ = writeln!(out, "\n[members]");
        for plan in roster.iter().chain(ensembles) {
            let constant = plan.per_a.windows(2).all(|w| {
                w[0].as_ref().map(|c| &c.members) == w[1].as_ref().map(|c| &c.members)
            });
            for (c, a) in plan.per_a.iter().zip(self.a_grid()) {
                if let Some(c) = c {
                    if constant {
                        let _ = writeln!(out, "{}: {}", plan.name, self.describe(c));
                        break;
                    }
                    let _ = writeln!(out, "{} a={a}: {}", plan.name, self.describe(c));
                }
            }
        }
        let _ = writeln!(out, "\n[config]");
        out.push_str(&self.config.to_toml());
        out
    }
}

/// Prepares data, builds the library and runs the full sweep.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    Experiment::prepare(config)?.run()
}

/// Table of the roster methods (Lin. Reg., QR, QRNN, NNAC, MBL, MBNL, ES_av).
pub fn run_roster(config: &ExperimentConfig) -> Result<ResultsTable> {
    Ok(run_sweep(config)?.table4)
}

/// Table of the six ensemble variants.
pub fn run_ensemble_sensitivity(config: &ExperimentConfig) -> Result<ResultsTable> {
    Ok(run_sweep(config)?.table5)
}

/// Writes CSV and text renderings, traces and the manifest into `dir`.
pub fn emit_report(output: &SweepOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: &str| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    let tables = [
        ("table4", &output.table4, 6),
        ("table5", &output.table5, 6),
        ("table6", &output.table6, 2),
        ("table7", &output.table7, 2),
        ("figure3", &output.figure3, 4),
        ("baselines", &output.baselines, 6),
    ];
    let mut text = String::new();
    for (name, table, decimals) in tables {
        write(&format!("{name}.csv"), &table.to_csv())?;
        text.push_str(&table.to_text(decimals));
        text.push('\n');
    }
    write("tables.txt", &text)?;
    for (name, csv) in &output.traces {
        write(name, csv)?;
    }
    write("manifest.txt", &output.manifest)
}

/// Reads `table4..7.csv` and `figure3.csv` back from a report directory.
pub fn read_report(dir: impl AsRef<Path>) -> Result<Vec<ResultsTable>> {
    let dir = dir.as_ref();
    ["table4", "table5", "table6", "table7", "figure3"]
        .iter()
        .map(|name| {
            let path = dir.join(format!("{name}.csv"));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            ResultsTable::from_csv(*name, &text)
        })
        .collect()
}
