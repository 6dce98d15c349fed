//! Forward stepwise ensemble selection with replacement, and the plain
//! simple-average combiner.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{check_pair, CostSpec};

pub const DEFAULT_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    /// Score of the current members plus candidate `j`, for every library model.
    pub candidate_scores: Vec<f64>,
    /// Candidate with the lowest score (lowest index on ties).
    pub best_candidate: usize,
    pub adopted: bool,
    /// Ensemble score after this iteration.
    pub ensemble_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    /// Library indices in order of adoption; repeats allowed.
    pub members: Vec<usize>,
    pub criterion: CostSpec,
    pub trace: Vec<TraceStep>,
    pub library_size: usize,
}

impl EnsembleModel {
    /// Multiplicity of each library model divided by the ensemble size.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.library_size];
        for &m in &self.members {
            w[m] += 1.0;
        }
        let n = self.members.len() as f64;
        w.iter_mut().for_each(|x| *x /= n);
        w
    }

    pub fn score(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |s| s.ensemble_score)
    }

    /// `iteration,candidate,score,adopted`, one row per candidate evaluation.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,candidate,score,adopted\n");
        for step in &self.trace {
            for (j, s) in step.candidate_scores.iter().enumerate() {
                let adopted = step.adopted && j == step.best_candidate;
                let _ = writeln!(out, "{},{j},{s},{adopted}", step.iteration);
            }
        }
        out
    }
}

fn check_library<P: AsRef<[f64]>>(predictions: &[P], actuals: &[f64]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput("ensemble library is empty".into()));
    }
    for (j, p) in predictions.iter().enumerate() {
        check_pair(actuals, p.as_ref())
            .map_err(|e| Error::InvalidInput(format!("library model {j}: {e}")))?;
    }
    Ok(())
}

fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = j;
        }
    }
    best
}

/// Greedy forward selection: start from the best single model, then repeatedly
/// add the model (repeats allowed) whose inclusion in the equal-weight average
/// gives the lowest criterion score, while that score strictly improves.
pub fn ensemble_select<P: AsRef<[f64]> + Sync>(
    predictions: &[P],
    actuals: &[f64],
    criterion: &CostSpec,
    max_iterations: usize,
) -> Result<EnsembleModel> {
    criterion.validate()?;
    check_library(predictions, actuals)?;
    if max_iterations == 0 {
        return Err(Error::Config("max_iterations must be >= 1".into()));
    }
    let n = actuals.len();
    let mut sum = vec![0.0; n];
    let mut members: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut current = f64::INFINITY;

    for iteration in 0..max_iterations {
        let k = members.len() as f64;
        let scores: Vec<f64> = predictions
            .par_iter()
            .map(|p| {
                let p = p.as_ref();
                let avg: Vec<f64> = sum.iter().zip(p).map(|(s, x)| (s + x) / (k + 1.0)).collect();
                criterion.mean_unchecked(actuals, &avg)
            })
            .collect();
        let best = argmin(&scores);
        let adopted = scores[best] < current;
        if adopted {
            current = scores[best];
            members.push(best);
            for (s, x) in sum.iter_mut().zip(predictions[best].as_ref()) {
                *s += x;
            }
        }
        trace.push(TraceStep {
            iteration,
            candidate_scores: scores,
            best_candidate: best,
            adopted,
            ensemble_score: current,
        });
        if !adopted {
            break;
        }
    }
    Ok(EnsembleModel {
        members,
        criterion: *criterion,
        trace,
        library_size: predictions.len(),
    })
}

/// Multiplicity-weighted average of the member forecasts.
pub fn ensemble_predict<P: AsRef<[f64]>>(ensemble: &EnsembleModel, predictions: &[P]) -> Result<Vec<f64>> {
    let Some(&first) = ensemble.members.first() else {
        return Err(Error::InvalidInput("ensemble has no members".into()));
    };
    let get = |m: usize| {
        predictions
            .get(m)
            .map(|p| p.as_ref())
            .ok_or_else(|| Error::InvalidInput(format!("missing predictions for library model {m}")))
    };
    let n = get(first)?.len();
    let mut sum = vec![0.0; n];
    for &m in &ensemble.members {
        let p = get(m)?;
        if p.len() != n {
            return Err(Error::InvalidInput(format!(
                "library model {m} has {} predictions, expected {n}",
                p.len()
            )));
        }
        for (s, x) in sum.iter_mut().zip(p) {
            *s += x;
        }
    }
    let k = ensemble.members.len() as f64;
    Ok(sum.into_iter().map(|s| s / k).collect())
}

/// Unweighted elementwise mean.
pub fn simple_average<P: AsRef<[f64]>>(predictions: &[P]) -> Result<Vec<f64>> {
    let Some(first) = predictions.first() else {
        return Err(Error::InvalidInput("nothing to average".into()));
    };
    let n = first.as_ref().len();
    let mut sum = vec![0.0; n];
    for p in predictions {
        let p = p.as_ref();
        if p.len() != n {
            return Err(Error::InvalidInput(format!(
                "prediction vectors differ in length ({} vs {n})",
                p.len()
            )));
        }
        for (s, x) in sum.iter_mut().zip(p) {
            *s += x;
        }
    }
    let k = predictions.len() as f64;
    Ok(sum.into_iter().map(|s| s / k).collect())
}
