//! Labeled points from reference simulations.

use alloc::string::ToString;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::collocation::PointBlock;
use super::{composite_boundary, CompositeInputSpec};
use crate::darcy::{extract_labeled, simulate};
use crate::error::{Error, Result};
use crate::field::{sample_xi, KleModel};
use crate::grid::{BoundarySpec, GridSpec, TimeSpec};

/// Random inputs behind one reference simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub xi: Vec<f64>,
    /// `[B1, B2, variance]` for the composite surrogate, empty otherwise.
    pub extras: Vec<f64>,
    /// Number of rows contributed to the labeled block.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    /// Rows `[t, x, y, xi.., extras..]` with `aux = [h, 0, 0]`.
    pub points: PointBlock,
    pub realizations: Vec<Realization>,
}

impl LabeledSet {
    pub fn empty(width: usize) -> Self {
        LabeledSet {
            points: PointBlock::new(width),
            realizations: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Simulates `realizations` random fields and extracts `per_realization`
/// labeled points from each. Per realization the draw order is `xi`, the
/// composite inputs, then the extraction sample.
#[allow(clippy::too_many_arguments)]
pub fn build_training_set<R: Rng + ?Sized>(
    model: &KleModel,
    grid: &GridSpec,
    time: &TimeSpec,
    boundary: &BoundarySpec,
    composite: Option<&CompositeInputSpec>,
    realizations: usize,
    per_realization: usize,
    rng: &mut R,
) -> Result<LabeledSet> {
    let width = 3 + model.len() + composite.map_or(0, |_| CompositeInputSpec::WIDTH);
    let mut set = LabeledSet::empty(width);
    let mut row = Vec::with_capacity(width);
    for index in 0..realizations {
        let wrap = |e: Error| Error::Realization {
            index,
            message: e.to_string(),
        };
        let xi = sample_xi(model.len(), rng);
        let (extras, b, var) = match composite {
            Some(c) => {
                let e = c.sample(rng);
                (e.to_vec(), composite_boundary(boundary, &e), Some(e[2]))
            }
            None => (Vec::new(), *boundary, None),
        };
        let k = model.field_on_grid_with_variance(&xi, grid, var).map_err(wrap)?;
        let sim = simulate(&k, grid, time, &b).map_err(wrap)?;
        let pts = extract_labeled(&sim, per_realization, rng).map_err(wrap)?;
        for p in &pts {
            row.clear();
            row.extend_from_slice(&[p.t, p.x, p.y]);
            row.extend_from_slice(&xi);
            row.extend_from_slice(&extras);
            set.points.push(&row, [p.h, 0.0, 0.0]);
        }
        set.realizations.push(Realization {
            xi,
            extras,
            count: pts.len(),
        });
    }
    Ok(set)
}
