//! Histogram and Gaussian kernel density of samples at one point.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const MIN_SAMPLES: usize = 30;
const GRID_POINTS: usize = 512;
const PAD_BANDWIDTHS: f64 = 4.0;
const MAX_BINS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfEstimate {
    /// `(t, x, y)`
    pub point: [f64; 3],
    pub samples: Vec<f64>,
    pub histogram: Histogram,
    pub bandwidth: Option<f64>,
    /// `(abscissae, ordinates)`; `None` for zero-spread samples.
    pub density: Option<(Vec<f64>, Vec<f64>)>,
}

impl PdfEstimate {
    /// Trapezoid integral of the density curve.
    pub fn density_integral(&self) -> Option<f64> {
        let (x, y) = self.density.as_ref()?;
        Some(
            x.windows(2)
                .zip(y.windows(2))
                .map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1]))
                .sum(),
        )
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Freedman-Diaconis histogram and Silverman-bandwidth Gaussian density.
pub fn pdf_estimate(point: [f64; 3], samples: &[f64]) -> Result<PdfEstimate> {
    let m = samples.len();
    if m < MIN_SAMPLES {
        return Err(invalid("a density estimate needs at least 30 samples"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(invalid("samples must be finite"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[m - 1]);
    let range = hi - lo;
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let n = m as f64;

    if !(range > 0.0) {
        return Ok(PdfEstimate {
            point,
            samples: samples.to_vec(),
            histogram: Histogram {
                edges: vec![lo, hi],
                counts: vec![m],
            },
            bandwidth: None,
            density: None,
        });
    }

    let fd = 2.0 * iqr / n.cbrt();
    let width = if fd > 0.0 {
        fd
    } else {
        // Sturges when the quartiles coincide
        range / (n.log2().ceil() + 1.0)
    };
    let bins = ((range / width).ceil() as usize).clamp(1, MAX_BINS);
    let width = range / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &v in samples {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }

    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    let (a, b) = (lo - PAD_BANDWIDTHS * h, hi + PAD_BANDWIDTHS * h);
    let xs: Vec<f64> = (0..GRID_POINTS)
        .map(|i| a + (b - a) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let norm = 1.0 / (n * h * (2.0 * core::f64::consts::PI).sqrt());
    let cutoff = 8.0 * h;
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            // sorted samples: only those within the kernel's reach
            let from = sorted.partition_point(|&v| v < x - cutoff);
            let to = sorted.partition_point(|&v| v <= x + cutoff);
            let s: f64 = sorted[from..to]
                .iter()
                .map(|&v| {
                    let u = (x - v) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            norm * s
        })
        .collect();
    Ok(PdfEstimate {
        point,
        samples: samples.to_vec(),
        histogram: Histogram { edges, counts },
        bandwidth: Some(h),
        density: Some((xs, ys)),
    })
}
