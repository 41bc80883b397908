//! Ensembles of head fields over a shared stream of random inputs.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Moments;
use crate::darcy::simulate;
use crate::error::{invalid, Error, Result};
use crate::field::{sample_xi, KleModel};
use crate::grid::{BoundarySpec, GridSpec, TimeSpec};
use crate::mlp::{forward_batch, Jet, NetworkSpec, Parameters};
use crate::parallel::map_chunks;
use crate::train::{composite_boundary, CompositeInputSpec, HeadMap};

/// Random inputs of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McInput {
    pub xi: Vec<f64>,
    /// `[B1, B2, variance]` for composite runs, empty otherwise.
    pub extras: Vec<f64>,
}

/// `m` realizations; per realization `xi` is drawn first, then the
/// composite inputs.
pub fn draw_inputs<R: Rng + ?Sized>(
    m: usize,
    n_xi: usize,
    composite: Option<&CompositeInputSpec>,
    rng: &mut R,
) -> Vec<McInput> {
    (0..m)
        .map(|_| {
            let xi = sample_xi(n_xi, rng);
            let extras = composite.map_or(Vec::new(), |c| c.sample(rng).to_vec());
            McInput { xi, extras }
        })
        .collect()
}

/// Evaluation grid: cell centers at the selected step-end times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub grid: GridSpec,
    pub time: TimeSpec,
    /// Step indices; 0 is the initial state.
    pub steps: Vec<usize>,
}

impl Layout {
    /// Every step `1..=n_t`.
    pub fn all_steps(grid: GridSpec, time: TimeSpec) -> Self {
        Layout {
            grid,
            time,
            steps: (1..=time.steps).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.time.validate()?;
        if self.steps.is_empty() || self.steps.iter().any(|&s| s > self.time.steps) {
            return Err(invalid("evaluation steps must be nonempty and within the simulation"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len() * self.grid.cells()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|&s| self.time.time_of(s)).collect()
    }
}

/// Anything that maps one realization's inputs to heads on a layout,
/// written step-major into `out`.
pub trait Evaluator: Sync {
    fn layout(&self) -> &Layout;
    fn evaluate(&self, input: &McInput, out: &mut [f64]) -> Result<()>;
    fn provenance(&self) -> String;
}

/// Reference solver on the layout grid.
#[derive(Debug, Clone)]
pub struct SolverEvaluator<'a> {
    pub model: &'a KleModel,
    pub boundary: BoundarySpec,
    pub layout: Layout,
}

impl Evaluator for SolverEvaluator<'_> {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn evaluate(&self, input: &McInput, out: &mut [f64]) -> Result<()> {
        let (boundary, variance) = match input.extras.as_slice() {
            [b1, b2, v] => (composite_boundary(&self.boundary, &[*b1, *b2, *v]), Some(*v)),
            [] => (self.boundary, None),
            _ => return Err(invalid("extras must be empty or [B1, B2, variance]")),
        };
        let l = &self.layout;
        let k = self.model.field_on_grid_with_variance(&input.xi, &l.grid, variance)?;
        let sim = simulate(&k, &l.grid, &l.time, &boundary)?;
        let cells = l.grid.cells();
        for (j, &s) in l.steps.iter().enumerate() {
            let src = if s == 0 { &sim.initial[..] } else { sim.snapshot(s) };
            out[j * cells..(j + 1) * cells].copy_from_slice(src);
        }
        Ok(())
    }

    fn provenance(&self) -> String {
        alloc::format!("solver:{}modes", self.model.len())
    }
}

/// Trained network evaluated at cell centers; reads the leading `xi`
/// entries it was trained on.
#[derive(Debug, Clone)]
pub struct SurrogateEvaluator<'a> {
    pub spec: &'a NetworkSpec,
    pub params: &'a Parameters,
    pub head: HeadMap,
    pub layout: Layout,
}

impl Evaluator for SurrogateEvaluator<'_> {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn evaluate(&self, input: &McInput, out: &mut [f64]) -> Result<()> {
        let n = self.spec.n_xi();
        if input.xi.len() < n || input.extras.len() != self.spec.extras.len() {
            return Err(Error::Shape("realization inputs do not match the network".into()));
        }
        let l = &self.layout;
        let g = &l.grid;
        let w = self.spec.input_width;
        let mut rows = Vec::with_capacity(l.len() * w);
        for &s in &l.steps {
            let t = l.time.time_of(s);
            for r in 0..g.ny {
                for c in 0..g.nx {
                    rows.extend_from_slice(&[t, g.center_x(c), g.center_y(r)]);
                    rows.extend_from_slice(&input.xi[..n]);
                    rows.extend_from_slice(&input.extras);
                }
            }
        }
        let raw = forward_batch(self.spec, self.params, &rows)?;
        for (i, (o, v)) in out.iter_mut().zip(raw).enumerate() {
            let x = rows[i * w + 1];
            *o = self.head.apply(&Jet { value: v, ..Jet::ZERO }, x)?.value;
        }
        Ok(())
    }

    fn provenance(&self) -> String {
        alloc::format!("surrogate:{}params", self.params.len())
    }
}

/// A single evaluation location: position in the layout's step list and
/// row-major cell index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub step_index: usize,
    pub cell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub grid: GridSpec,
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub samples: usize,
    /// Step-major mean heads.
    pub mean: Vec<f64>,
    /// Step-major unbiased variances.
    pub variance: Vec<f64>,
    pub provenance: String,
    pub probes: Vec<Probe>,
    /// Per probe, the value of every realization in input order.
    pub probe_samples: Vec<Vec<f64>>,
}

impl EnsembleStats {
    pub fn cells(&self) -> usize {
        self.grid.cells()
    }

    pub fn mean_at(&self, k: usize) -> &[f64] {
        let c = self.cells();
        &self.mean[k * c..(k + 1) * c]
    }

    pub fn variance_at(&self, k: usize) -> &[f64] {
        let c = self.cells();
        &self.variance[k * c..(k + 1) * c]
    }

    /// Position of `step` in the step list.
    pub fn step_index(&self, step: usize) -> Option<usize> {
        self.steps.iter().position(|&s| s == step)
    }
}

const REALIZATION_CHUNK: usize = 8;
const CHUNKS_PER_ROUND: usize = 64;

/// One-pass mean and variance over `inputs`. Realizations are grouped in
/// fixed-size chunks whose partial moments merge in input order.
pub fn mc_ensemble<E: Evaluator + ?Sized>(evaluator: &E, inputs: &[McInput], probes: &[Probe]) -> Result<EnsembleStats> {
    let layout = evaluator.layout();
    layout.validate()?;
    if inputs.len() < 2 {
        return Err(invalid("an ensemble needs at least two realizations"));
    }
    let cells = layout.grid.cells();
    if probes.iter().any(|p| p.step_index >= layout.steps.len() || p.cell >= cells) {
        return Err(invalid("probe outside the evaluation layout"));
    }
    let len = layout.len();
    let mut total = Moments::new(len);
    let mut probe_samples = vec![Vec::with_capacity(inputs.len()); probes.len()];
    let round = REALIZATION_CHUNK * CHUNKS_PER_ROUND;
    let mut start = 0;
    while start < inputs.len() {
        let end = (start + round).min(inputs.len());
        let parts = map_chunks(end - start, REALIZATION_CHUNK, |range| -> Result<(Moments, Vec<Vec<f64>>)> {
            let mut m = Moments::new(len);
            let mut buf = vec![0.0; len];
            let mut picked = vec![Vec::with_capacity(range.len()); probes.len()];
            for i in range {
                let index = start + i;
                evaluator
                    .evaluate(&inputs[index], &mut buf)
                    .map_err(|e| Error::Realization {
                        index,
                        message: e.to_string(),
                    })?;
                if buf.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Realization {
                        index,
                        message: "non-finite head".to_string(),
                    });
                }
                m.push(&buf);
                for (p, s) in probes.iter().zip(&mut picked) {
                    s.push(buf[p.step_index * cells + p.cell]);
                }
            }
            Ok((m, picked))
        });
        for part in parts {
            let (m, picked) = part?;
            total.merge(&m);
            for (dst, src) in probe_samples.iter_mut().zip(picked) {
                dst.extend(src);
            }
        }
        start = end;
    }
    Ok(EnsembleStats {
        grid: layout.grid,
        steps: layout.steps.clone(),
        times: layout.times(),
        samples: inputs.len(),
        variance: total.variance(),
        mean: total.mean,
        provenance: evaluator.provenance(),
        probes: probes.to_vec(),
        probe_samples,
    })
}
