//! Five-point conductance operator on the non-pinned cells.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use super::banded::BandedCholesky;
use crate::grid::{BoundarySpec, GridSpec};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub(crate) struct Conductance {
    /// Cell index of each unknown.
    pub(crate) cell: Vec<usize>,
    /// Sum of transmissibilities of each unknown (including pinned links).
    pub(crate) diag: Vec<f64>,
    /// Up to four `(unknown, transmissibility)` links to other unknowns.
    pub(crate) links: Vec<[(usize, f64); 4]>,
    /// Inflow from constant-head neighbours, `sum T * h_pinned`, plus the
    /// prescribed flux `g dx` through each outer y face (`g = K dh/dn`).
    pub(crate) pinned_rhs: Vec<f64>,
    pub(crate) bandwidth: usize,
}

#[inline]
fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

impl Conductance {
    pub(crate) fn assemble(k: &[f64], grid: &GridSpec, boundary: &BoundarySpec) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let interior = nx - 2;
        let column_major = ny <= interior;
        let mut slot = vec![NONE; nx * ny];
        let mut cell = vec![0; ny * interior];
        for r in 0..ny {
            for c in 1..nx - 1 {
                let u = if column_major {
                    (c - 1) * ny + r
                } else {
                    r * interior + (c - 1)
                };
                slot[grid.index(r, c)] = u;
                cell[u] = grid.index(r, c);
            }
        }
        let tx = grid.dy / grid.dx;
        let ty = grid.dx / grid.dy;
        let m = cell.len();
        let mut diag = vec![0.0; m];
        let mut links = vec![[(NONE, 0.0); 4]; m];
        let mut pinned_rhs = vec![0.0; m];
        for u in 0..m {
            let idx = cell[u];
            let (r, c) = (idx / nx, idx % nx);
            let kc = k[idx];
            let mut nbrs: [(usize, usize, f64); 4] = [(NONE, NONE, 0.0); 4];
            nbrs[0] = (r, c - 1, tx);
            nbrs[1] = (r, c + 1, tx);
            if r > 0 {
                nbrs[2] = (r - 1, c, ty);
            } else {
                pinned_rhs[u] += boundary.flux * grid.dx;
            }
            if r + 1 < ny {
                nbrs[3] = (r + 1, c, ty);
            } else {
                pinned_rhs[u] += boundary.flux * grid.dx;
            }
            for (n, &(rr, cc, geo)) in nbrs.iter().enumerate() {
                if rr == NONE {
                    continue;
                }
                let j = grid.index(rr, cc);
                let t = geo * harmonic(kc, k[j]);
                diag[u] += t;
                if slot[j] == NONE {
                    let h = if cc == 0 { boundary.h_left } else { boundary.h_right };
                    pinned_rhs[u] += t * h;
                } else {
                    links[u][n] = (slot[j], t);
                }
            }
        }
        Conductance {
            cell,
            diag,
            links,
            pinned_rhs,
            bandwidth: if column_major { ny } else { interior },
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.cell.len()
    }

    /// `out = (shift I + A) x`
    pub(crate) fn apply(&self, shift: f64, x: &[f64], out: &mut [f64]) {
        for u in 0..self.len() {
            let mut s = (shift + self.diag[u]) * x[u];
            for &(v, t) in &self.links[u] {
                if v != NONE {
                    s -= t * x[v];
                }
            }
            out[u] = s;
        }
    }

    pub(crate) fn entry(&self, shift: f64, i: usize, j: usize) -> f64 {
        if i == j {
            return shift + self.diag[i];
        }
        self.links[i]
            .iter()
            .find(|(v, _)| *v == j)
            .map_or(0.0, |(_, t)| -t)
    }

    pub(crate) fn factor(&self, shift: f64) -> Option<BandedCholesky> {
        BandedCholesky::factor(self.len(), self.bandwidth, |i, j| self.entry(shift, i, j))
    }
}
