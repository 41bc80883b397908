//! Residuals of the flow equation, boundary and initial conditions, and the
//! mean-square loss terms built from them.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::collocation::{CollocationSet, PointBlock};
use super::data::LabeledSet;
use super::{check_width, BcMode, LossWeights, TrainingConfig};
use crate::error::{Error, Result};
use crate::grid::{BoundarySpec, GridSpec, TimeSpec};
use crate::mlp::{apply_hard_bc, forward_jets, hard_bc_adjoint, loss_gradient, Jet, JetMode, NetworkSpec, Parameters};

/// Output transform from the raw network to head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeadMap {
    /// `h0 (1 - s) + hL s + s (1 - s) NN`, `s = (x - x0) / lx`.
    Hard { h0: f64, hl: f64, x0: f64, lx: f64 },
    /// `offset + NN`.
    Soft { offset: f64 },
}

impl HeadMap {
    pub fn apply(&self, raw: &Jet, x: f64) -> Result<Jet> {
        match *self {
            HeadMap::Hard { h0, hl, x0, lx } => apply_hard_bc(raw, x, h0, hl, x0, lx),
            HeadMap::Soft { offset } => Ok(Jet {
                value: raw.value + offset,
                ..*raw
            }),
        }
    }

    pub fn adjoint(&self, bar: &Jet, x: f64) -> Jet {
        match *self {
            HeadMap::Hard { x0, lx, .. } => hard_bc_adjoint(bar, x, x0, lx),
            HeadMap::Soft { .. } => *bar,
        }
    }

    pub fn is_hard(&self) -> bool {
        matches!(self, HeadMap::Hard { .. })
    }
}

/// Everything besides the network that the residuals need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub specific_storage: f64,
    /// Prescribed normal flux on the no-flow faces.
    pub flux: f64,
    pub head: HeadMap,
    pub pde_scale: f64,
    pub neumann_scale: f64,
}

impl Physics {
    pub fn new(boundary: &BoundarySpec, grid: &GridSpec, time: &TimeSpec, config: &TrainingConfig) -> Self {
        let head = match config.bc_mode {
            BcMode::Hard => HeadMap::Hard {
                h0: boundary.h_left,
                hl: boundary.h_right,
                x0: grid.x0,
                lx: grid.lx(),
            },
            BcMode::Soft => HeadMap::Soft {
                offset: boundary.h_init,
            },
        };
        Physics {
            specific_storage: boundary.specific_storage,
            flux: boundary.flux,
            head,
            pde_scale: config.pde_scale.unwrap_or(time.t_end() / boundary.specific_storage),
            neumann_scale: config.neumann_scale.unwrap_or(grid.ly()),
        }
    }
}

/// `S_s h_t - exp(Z) (h_xx + h_yy + Z_x h_x + Z_y h_y)`.
pub fn pde_residual(jet: &Jet, z: f64, zx: f64, zy: f64, specific_storage: f64) -> f64 {
    let k = z.exp();
    specific_storage * jet.dt - k * (jet.dxx + jet.dyy + zx * jet.dx + zy * jet.dy)
}

/// Mean-square value of each loss term; inactive terms are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Components {
    pub data: f64,
    pub pde: f64,
    pub dirichlet: f64,
    pub neumann: f64,
    pub initial: f64,
}

impl Components {
    pub fn to_array(&self) -> [f64; 5] {
        [self.data, self.pde, self.dirichlet, self.neumann, self.initial]
    }

    pub(crate) fn set(&mut self, term: Term, v: f64) {
        match term {
            Term::Data => self.data = v,
            Term::Pde => self.pde = v,
            Term::Dirichlet => self.dirichlet = v,
            Term::Neumann => self.neumann = v,
            Term::Initial => self.initial = v,
        }
    }
}

/// Weighted sum of the components.
pub fn total_loss(c: &Components, w: &LossWeights) -> f64 {
    c.to_array().iter().zip(w.to_array()).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Term {
    Data,
    Pde,
    Dirichlet,
    Neumann,
    Initial,
}

impl Term {
    pub(crate) const ALL: [Term; 5] = [Term::Data, Term::Pde, Term::Dirichlet, Term::Neumann, Term::Initial];

    fn mode(self) -> JetMode {
        match self {
            Term::Pde | Term::Neumann => JetMode::Full,
            _ => JetMode::Value,
        }
    }

    pub(crate) fn weight(self, w: &LossWeights) -> f64 {
        w.to_array()[self as usize]
    }

    pub(crate) fn name(self) -> &'static str {
        ["data", "pde", "dirichlet", "neumann", "initial"][self as usize]
    }

    pub(crate) fn block<'a>(self, labeled: &'a LabeledSet, colloc: &'a CollocationSet) -> &'a PointBlock {
        match self {
            Term::Data => &labeled.points,
            Term::Pde => &colloc.interior,
            Term::Dirichlet => &colloc.dirichlet,
            Term::Neumann => &colloc.neumann,
            Term::Initial => &colloc.initial,
        }
    }
}

/// Terms that enter the loss. An empty labeled set drops the data term;
/// hard imposition drops the Dirichlet term. Any other positively weighted
/// term with no points is a configuration error.
pub(crate) fn active_terms(
    weights: &LossWeights,
    physics: &Physics,
    labeled: &LabeledSet,
    colloc: &CollocationSet,
) -> Result<Vec<Term>> {
    weights.validate()?;
    let mut out = Vec::new();
    for term in Term::ALL {
        if term.weight(weights) == 0.0 {
            continue;
        }
        if term == Term::Data && labeled.points.is_empty() {
            continue;
        }
        if term == Term::Dirichlet && physics.head.is_hard() {
            continue;
        }
        if term.block(labeled, colloc).is_empty() {
            return Err(Error::Config(alloc::format!(
                "the {} term is weighted but has no points",
                term.name()
            )));
        }
        out.push(term);
    }
    if out.is_empty() {
        return Err(Error::Config("no active loss term".into()));
    }
    Ok(out)
}

fn scaled(j: &Jet, a: f64) -> Jet {
    Jet::from_array(j.to_array().map(|v| v * a))
}

/// Residual at one point and its derivative with respect to the head jet.
#[inline]
fn residual(term: Term, physics: &Physics, h: &Jet, aux: &[f64; 3]) -> (f64, Jet) {
    match term {
        Term::Data | Term::Dirichlet | Term::Initial => (
            h.value - aux[0],
            Jet {
                value: 1.0,
                ..Jet::ZERO
            },
        ),
        Term::Pde => {
            let c = physics.pde_scale;
            let [z, zx, zy] = *aux;
            let k = z.exp();
            let r = c * pde_residual(h, z, zx, zy, physics.specific_storage);
            let d = Jet {
                value: 0.0,
                dt: c * physics.specific_storage,
                dx: -c * k * zx,
                dy: -c * k * zy,
                dxx: -c * k,
                dyy: -c * k,
            };
            (r, d)
        }
        Term::Neumann => {
            let c = physics.neumann_scale;
            let (k, ny) = (aux[0], aux[1]);
            let r = c * (k * h.dy * ny - physics.flux);
            (
                r,
                Jet {
                    dy: c * k * ny,
                    ..Jet::ZERO
                },
            )
        }
    }
}

/// Mean squared residual of `term` over `block`.
pub(crate) fn term_mean(
    term: Term,
    spec: &NetworkSpec,
    params: &Parameters,
    physics: &Physics,
    block: &PointBlock,
) -> Result<f64> {
    let w = spec.input_width;
    check_width(block.width, w, term.name())?;
    let n = block.len();
    if n == 0 {
        return Ok(0.0);
    }
    let jets = forward_jets(spec, params, &block.rows, term.mode())?;
    let mut sum = 0.0;
    for (i, raw) in jets.iter().enumerate() {
        let h = physics.head.apply(raw, block.rows[i * w + 1])?;
        let (r, _) = residual(term, physics, &h, &block.aux[i]);
        sum += r * r;
    }
    Ok(sum / n as f64)
}

/// Mean squared residual of `term` over `block` and the gradient of
/// `weight` times that mean.
pub(crate) fn term_gradient(
    term: Term,
    spec: &NetworkSpec,
    params: &Parameters,
    physics: &Physics,
    block: &PointBlock,
    weight: f64,
) -> Result<(f64, Vec<f64>)> {
    let w = spec.input_width;
    check_width(block.width, w, term.name())?;
    let n = block.len();
    let factor = weight / n.max(1) as f64;
    let (sum, grad) = loss_gradient(spec, params, &block.rows, term.mode(), |i, raw| {
        let x = block.rows[i * w + 1];
        let Ok(h) = physics.head.apply(raw, x) else {
            return (f64::NAN, Jet::ZERO);
        };
        let (r, d) = residual(term, physics, &h, &block.aux[i]);
        let bar = physics.head.adjoint(&scaled(&d, 2.0 * r * factor), x);
        (r * r, bar)
    })?;
    Ok((sum / n.max(1) as f64, grad))
}

/// Every active loss term evaluated over the full sets.
pub fn mse_components(
    spec: &NetworkSpec,
    params: &Parameters,
    physics: &Physics,
    weights: &LossWeights,
    labeled: &LabeledSet,
    colloc: &CollocationSet,
) -> Result<Components> {
    let mut c = Components::default();
    for term in active_terms(weights, physics, labeled, colloc)? {
        c.set(term, term_mean(term, spec, params, physics, term.block(labeled, colloc))?);
    }
    Ok(c)
}
