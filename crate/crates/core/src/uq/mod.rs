//! Monte Carlo statistics of head fields from either the reference solver
//! or a trained surrogate, and the accuracy metrics comparing them.

mod ensemble;
mod pdf;

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use ensemble::{
    draw_inputs, mc_ensemble, EnsembleStats, Evaluator, Layout, McInput, Probe, SolverEvaluator, SurrogateEvaluator,
};
pub use pdf::{pdf_estimate, Histogram, PdfEstimate};

use crate::error::{invalid, Error, Result};

/// `||pred - ref|| / ||ref||`
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Shape("relative L2 needs equal lengths".into()));
    }
    let num: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if !(den > 0.0) {
        return Err(invalid("relative L2 with a zero reference"));
    }
    Ok((num / den).sqrt())
}

/// `1 - SS_res / SS_tot`
pub fn r2_score(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Shape("R2 needs equal lengths".into()));
    }
    if reference.len() < 2 {
        return Err(invalid("R2 needs at least two values"));
    }
    let mean = reference.iter().sum::<f64>() / reference.len() as f64;
    let ss_tot: f64 = reference.iter().map(|r| (r - mean) * (r - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(invalid("R2 with a constant reference"));
    }
    let ss_res: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Streaming per-element mean and sum of squared deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Moments {
    pub fn new(len: usize) -> Self {
        Moments {
            count: 0,
            mean: alloc::vec![0.0; len],
            m2: alloc::vec![0.0; len],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Combine with another partial state (pairwise update).
    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    /// Unbiased variance; clamped at zero.
    pub fn variance(&self) -> Vec<f64> {
        let d = (self.count.max(2) - 1) as f64;
        self.m2.iter().map(|s| (s / d).max(0.0)).collect()
    }
}

/// Accuracy of one evaluated step. Undefined metrics (a zero or constant
/// reference) are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub time: f64,
    pub mean_rel_l2: f64,
    pub mean_r2: f64,
    pub var_rel_l2: f64,
    pub var_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn at_step(&self, step: usize) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.step == step)
    }
}

/// Both metrics for the mean and variance fields at every step.
pub fn metric_table(surrogate: &EnsembleStats, benchmark: &EnsembleStats) -> Result<MetricTable> {
    if surrogate.steps != benchmark.steps || surrogate.cells() != benchmark.cells() {
        return Err(Error::Shape("ensembles cover different steps or grids".into()));
    }
    let or_nan = |r: Result<f64>| r.unwrap_or(f64::NAN);
    let rows = (0..surrogate.steps.len())
        .map(|k| MetricRow {
            step: benchmark.steps[k],
            time: benchmark.times[k],
            mean_rel_l2: or_nan(relative_l2(surrogate.mean_at(k), benchmark.mean_at(k))),
            mean_r2: or_nan(r2_score(surrogate.mean_at(k), benchmark.mean_at(k))),
            var_rel_l2: or_nan(relative_l2(surrogate.variance_at(k), benchmark.variance_at(k))),
            var_r2: or_nan(r2_score(surrogate.variance_at(k), benchmark.variance_at(k))),
        })
        .collect();
    Ok(MetricTable { rows })
}

#[cfg(test)]
mod tests;
