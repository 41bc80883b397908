//! Fixed random point sets at which the physics terms are penalized.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{composite_boundary, CompositeInputSpec, LossWeights};
use crate::error::{Error, Result};
use crate::field::{sample_xi, KleModel};
use crate::grid::BoundarySpec;

/// Input rows of one loss term with three per-point auxiliary values.
///
/// | block     | aux                         |
/// |-----------|-----------------------------|
/// | labeled   | `[h, 0, 0]`                 |
/// | interior  | `[Z, dZ/dx, dZ/dy]`         |
/// | dirichlet | `[h, 0, 0]`                 |
/// | neumann   | `[K, n_y, 0]`               |
/// | initial   | `[h, 0, 0]`                 |
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointBlock {
    pub width: usize,
    pub rows: Vec<f64>,
    pub aux: Vec<[f64; 3]>,
}

impl PointBlock {
    pub fn new(width: usize) -> Self {
        PointBlock {
            width,
            rows: Vec::new(),
            aux: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.aux.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aux.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.width..(i + 1) * self.width]
    }

    pub fn push(&mut self, row: &[f64], aux: [f64; 3]) {
        debug_assert_eq!(row.len(), self.width);
        self.rows.extend_from_slice(row);
        self.aux.push(aux);
    }

    /// Rows `idx` in the given order.
    pub fn gather(&self, idx: &[usize]) -> PointBlock {
        let mut out = PointBlock::new(self.width);
        out.rows.reserve(idx.len() * self.width);
        out.aux.reserve(idx.len());
        for &i in idx {
            out.push(self.row(i), self.aux[i]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CollocationCounts {
    pub interior: usize,
    pub dirichlet: usize,
    pub neumann: usize,
    pub initial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationSet {
    pub interior: PointBlock,
    pub dirichlet: PointBlock,
    pub neumann: PointBlock,
    pub initial: PointBlock,
}

impl CollocationSet {
    pub fn empty(width: usize) -> Self {
        CollocationSet {
            interior: PointBlock::new(width),
            dirichlet: PointBlock::new(width),
            neumann: PointBlock::new(width),
            initial: PointBlock::new(width),
        }
    }
}

/// Sampling ranges: the field domain, `(0, t_end]`, and the optional
/// composite inputs.
#[derive(Debug, Clone, Copy)]
pub struct Sampler<'a> {
    pub model: &'a KleModel,
    pub t_end: f64,
    pub boundary: BoundarySpec,
    pub composite: Option<CompositeInputSpec>,
}

impl Sampler<'_> {
    pub fn width(&self) -> usize {
        3 + self.model.len() + self.composite.map_or(0, |_| CompositeInputSpec::WIDTH)
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config("sampling time range must be positive".into()));
        }
        if let Some(c) = &self.composite {
            c.validate()?;
        }
        self.boundary.validate()
    }

    /// `(0, t_end]`
    fn time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.t_end * (1.0 - rng.random::<f64>())
    }

    fn along<R: Rng + ?Sized>(lo: f64, len: f64, rng: &mut R) -> f64 {
        lo + len * rng.random::<f64>()
    }

    /// Fills `row[3..]` with a fresh `xi` and composite draw; returns the
    /// variance override and boundary for the point.
    fn parameters<R: Rng + ?Sized>(&self, row: &mut Vec<f64>, rng: &mut R) -> (Option<f64>, BoundarySpec) {
        row.truncate(3);
        row.extend(sample_xi(self.model.len(), rng));
        match &self.composite {
            Some(c) => {
                let e = c.sample(rng);
                row.extend_from_slice(&e);
                (Some(e[2]), composite_boundary(&self.boundary, &e))
            }
            None => (None, self.boundary),
        }
    }
}

/// Draws every point set once. Per point the draw order is `t, x, y`, then
/// `xi`, then the composite inputs; boundary points draw their side first.
pub fn sample_collocation<R: Rng + ?Sized>(
    sampler: &Sampler<'_>,
    counts: &CollocationCounts,
    weights: &LossWeights,
    rng: &mut R,
) -> Result<CollocationSet> {
    sampler.validate()?;
    if counts.interior == 0 && weights.pde > 0.0 {
        return Err(Error::Config("the flow residual is weighted but no interior points were requested".into()));
    }
    let spec = &sampler.model.spec;
    let width = sampler.width();
    let mut set = CollocationSet::empty(width);
    let mut row = Vec::with_capacity(width);

    for _ in 0..counts.interior {
        let t = sampler.time(rng);
        let x = Sampler::along(spec.x0, spec.lx, rng);
        let y = Sampler::along(spec.y0, spec.ly, rng);
        row.clear();
        row.extend_from_slice(&[t, x, y]);
        let (var, _) = sampler.parameters(&mut row, rng);
        let (z, zx, zy) = sampler.model.log_k_gradient(&row[3..], x, y, var)?;
        set.interior.push(&row, [z, zx, zy]);
    }
    for _ in 0..counts.dirichlet {
        let right = rng.random::<bool>();
        let t = sampler.time(rng);
        let x = if right { spec.x0 + spec.lx } else { spec.x0 };
        let y = Sampler::along(spec.y0, spec.ly, rng);
        row.clear();
        row.extend_from_slice(&[t, x, y]);
        let (_, b) = sampler.parameters(&mut row, rng);
        let h = if right { b.h_right } else { b.h_left };
        set.dirichlet.push(&row, [h, 0.0, 0.0]);
    }
    for _ in 0..counts.neumann {
        let top = rng.random::<bool>();
        let t = sampler.time(rng);
        let x = Sampler::along(spec.x0, spec.lx, rng);
        let y = if top { spec.y0 + spec.ly } else { spec.y0 };
        row.clear();
        row.extend_from_slice(&[t, x, y]);
        let (var, _) = sampler.parameters(&mut row, rng);
        let k = sampler.model.log_k_with_variance(&row[3..], x, y, var)?.exp();
        set.neumann.push(&row, [k, if top { 1.0 } else { -1.0 }, 0.0]);
    }
    for _ in 0..counts.initial {
        let x = Sampler::along(spec.x0, spec.lx, rng);
        let y = Sampler::along(spec.y0, spec.ly, rng);
        row.clear();
        row.extend_from_slice(&[0.0, x, y]);
        let (_, b) = sampler.parameters(&mut row, rng);
        set.initial.push(&row, [b.h_init, 0.0, 0.0]);
    }
    Ok(set)
}
