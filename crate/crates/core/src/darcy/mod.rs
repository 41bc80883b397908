//! Finite-difference reference solver for
//! `S_s dh/dt - div(K grad h) = 0` on a cell-centered grid.
//!
//! Backward Euler in time, five-point stencil with harmonic-mean face
//! transmissibilities. The first and last columns are constant-head cells;
//! the top and bottom faces carry no flow.

mod banded;
mod pcg;
mod system;

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{BoundarySpec, GridSpec, TimeSpec};
use system::Conductance;

/// Relative residual every linear solve must reach.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// Systems with fewer unknowns are factored directly.
pub const DIRECT_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    /// Banded Cholesky below [`DIRECT_LIMIT`] unknowns, PCG above.
    #[default]
    Auto,
    Banded,
    Pcg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub boundary: BoundarySpec,
    /// Head at `t = 0`, row-major.
    pub initial: Vec<f64>,
    /// End-of-step heads `[step][row][col]` for steps `1..=n_t`.
    pub heads: Vec<f64>,
}

impl SimulationResult {
    /// Snapshot at 1-based step `k`.
    pub fn snapshot(&self, step: usize) -> &[f64] {
        let n = self.grid.cells();
        &self.heads[(step - 1) * n..step * n]
    }

    pub fn head(&self, step: usize, row: usize, col: usize) -> f64 {
        self.snapshot(step)[self.grid.index(row, col)]
    }
}

/// One labeled observation at a cell center and step-end time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub h: f64,
}

fn check_inputs(k: &[f64], grid: &GridSpec, boundary: &BoundarySpec) -> Result<()> {
    grid.validate()?;
    boundary.validate()?;
    if grid.nx < 3 {
        return Err(invalid("need at least one column between the constant-head columns"));
    }
    if k.len() != grid.cells() {
        return Err(invalid("conductivity array does not match the grid"));
    }
    if k.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid("conductivity must be positive and finite"));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Solver {
    op: Conductance,
    shift: f64,
    direct: Option<banded::BandedCholesky>,
    scratch: Vec<f64>,
}

impl Solver {
    fn new(op: Conductance, shift: f64, kind: LinearSolver) -> Result<Self> {
        let direct = match kind {
            LinearSolver::Banded => true,
            LinearSolver::Pcg => false,
            LinearSolver::Auto => op.len() < DIRECT_LIMIT,
        };
        let direct = if direct {
            Some(op.factor(shift).ok_or_else(|| invalid("system matrix is not positive definite"))?)
        } else {
            None
        };
        let n = op.len();
        Ok(Solver {
            op,
            shift,
            direct,
            scratch: vec![0.0; n],
        })
    }

    /// Solve `(shift I + A) x = b`, checking the true residual.
    fn solve(&mut self, b: &[f64], x: &mut [f64], step: usize) -> Result<()> {
        let bn = norm(b);
        if bn == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(());
        }
        let rel = match &self.direct {
            Some(f) => {
                x.copy_from_slice(b);
                f.solve_in_place(x);
                let mut rel = 0.0;
                for _ in 0..3 {
                    self.op.apply(self.shift, x, &mut self.scratch);
                    for (s, bi) in self.scratch.iter_mut().zip(b) {
                        *s = bi - *s;
                    }
                    rel = norm(&self.scratch) / bn;
                    if rel <= SOLVE_TOLERANCE {
                        break;
                    }
                    f.solve_in_place(&mut self.scratch);
                    for (xi, d) in x.iter_mut().zip(&self.scratch) {
                        *xi += d;
                    }
                }
                rel
            }
            None => {
                x.iter_mut().for_each(|v| *v = 0.0);
                pcg::solve(&self.op, self.shift, b, x, SOLVE_TOLERANCE, 20 * self.op.len() + 100)
            }
        };
        if rel > SOLVE_TOLERANCE || !rel.is_finite() {
            return Err(Error::SolverDivergence { step, residual: rel });
        }
        Ok(())
    }
}

fn initial_heads(grid: &GridSpec, boundary: &BoundarySpec) -> Vec<f64> {
    let mut h = vec![boundary.h_init; grid.cells()];
    for r in 0..grid.ny {
        h[grid.index(r, 0)] = boundary.h_left;
        h[grid.index(r, grid.nx - 1)] = boundary.h_right;
    }
    h
}

pub fn simulate(
    k: &[f64],
    grid: &GridSpec,
    time: &TimeSpec,
    boundary: &BoundarySpec,
) -> Result<SimulationResult> {
    simulate_with(k, grid, time, boundary, LinearSolver::Auto)
}

pub fn simulate_with(
    k: &[f64],
    grid: &GridSpec,
    time: &TimeSpec,
    boundary: &BoundarySpec,
    solver: LinearSolver,
) -> Result<SimulationResult> {
    check_inputs(k, grid, boundary)?;
    time.validate()?;
    let op = Conductance::assemble(k, grid, boundary);
    let storage = boundary.specific_storage * grid.dx * grid.dy / time.dt;
    let mut solver = Solver::new(op, storage, solver)?;
    let initial = initial_heads(grid, boundary);
    let m = solver.op.len();
    let mut h: Vec<f64> = solver.op.cell.iter().map(|&c| initial[c]).collect();
    let mut rhs = vec![0.0; m];
    let mut delta = vec![0.0; m];
    let mut snapshot = initial.clone();
    let mut heads = Vec::with_capacity(time.steps * grid.cells());
    for step in 1..=time.steps {
        // increment form: (C + A) dh = q_pinned - A h
        solver.op.apply(0.0, &h, &mut rhs);
        for (r, q) in rhs.iter_mut().zip(&solver.op.pinned_rhs) {
            *r = q - *r;
        }
        solver.solve(&rhs, &mut delta, step)?;
        for (hi, d) in h.iter_mut().zip(&delta) {
            *hi += d;
        }
        for (u, &c) in solver.op.cell.iter().enumerate() {
            snapshot[c] = h[u];
        }
        heads.extend_from_slice(&snapshot);
    }
    Ok(SimulationResult {
        grid: *grid,
        time: *time,
        boundary: *boundary,
        initial,
        heads,
    })
}

/// Time-independent solution, row-major.
pub fn steady_state(k: &[f64], grid: &GridSpec, boundary: &BoundarySpec) -> Result<Vec<f64>> {
    steady_state_with(k, grid, boundary, LinearSolver::Auto)
}

pub fn steady_state_with(
    k: &[f64],
    grid: &GridSpec,
    boundary: &BoundarySpec,
    solver: LinearSolver,
) -> Result<Vec<f64>> {
    check_inputs(k, grid, boundary)?;
    let op = Conductance::assemble(k, grid, boundary);
    let mut solver = Solver::new(op, 0.0, solver)?;
    let b = solver.op.pinned_rhs.clone();
    let mut x = vec![0.0; b.len()];
    solver.solve(&b, &mut x, 0)?;
    let mut out = initial_heads(grid, boundary);
    for (u, &c) in solver.op.cell.iter().enumerate() {
        out[c] = x[u];
    }
    Ok(out)
}

/// Uniform sample without replacement of `count` space-time cell values.
pub fn extract_labeled<R: Rng + ?Sized>(
    result: &SimulationResult,
    count: usize,
    rng: &mut R,
) -> Result<Vec<LabeledPoint>> {
    let cells = result.grid.cells();
    let total = result.time.steps * cells;
    if count > total {
        return Err(invalid("requested more labeled points than the solution holds"));
    }
    let g = &result.grid;
    let picks = rand::seq::index::sample(rng, total, count);
    Ok(picks
        .into_iter()
        .map(|i| {
            let step = i / cells + 1;
            let cell = i % cells;
            LabeledPoint {
                t: result.time.time_of(step),
                x: g.center_x(cell % g.nx),
                y: g.center_y(cell / g.nx),
                h: result.heads[i],
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base_boundary() -> BoundarySpec {
        BoundarySpec {
            h_left: 202.0,
            h_right: 200.0,
            flux: 0.0,
            h_init: 200.0,
            specific_storage: 1e-4,
        }
    }

    #[test]
    fn initial_state_matches_base_case() {
        let g = GridSpec::covering(51, 51, 1020.0, 1020.0, 0.0, 0.0).unwrap();
        let t = TimeSpec { dt: 0.2, steps: 2 };
        let r = simulate(&vec![1.0; g.cells()], &g, &t, &base_boundary()).unwrap();
        for row in 0..51 {
            assert_eq!(r.initial[g.index(row, 0)], 202.0);
            for col in 1..50 {
                assert_eq!(r.initial[g.index(row, col)], 200.0);
            }
        }
        assert_eq!(r.heads.len(), 2 * g.cells());
    }

    #[test]
    fn constant_conductivity_steady_state_is_linear() {
        let g = GridSpec::covering(21, 7, 1020.0, 1020.0, 0.0, 0.0).unwrap();
        for c in [0.3, 1.0, 17.0] {
            let h = steady_state(&vec![c; g.cells()], &g, &base_boundary()).unwrap();
            for row in 0..g.ny {
                assert_eq!(h[g.index(row, 0)], 202.0);
                assert_eq!(h[g.index(row, 20)], 200.0);
                for col in 0..g.nx {
                    // pinned cell centers are the effective Dirichlet locations
                    let s = (col as f64) / 20.0;
                    let expect = 202.0 - 2.0 * s;
                    assert!((h[g.index(row, col)] - expect).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn pcg_and_banded_agree() {
        let g = GridSpec::covering(30, 24, 600.0, 480.0, 0.0, 0.0).unwrap();
        let k: Vec<f64> = (0..g.cells()).map(|i| (0.7 * (i as f64 * 0.37).sin()).exp()).collect();
        let t = TimeSpec { dt: 0.5, steps: 4 };
        let a = simulate_with(&k, &g, &t, &base_boundary(), LinearSolver::Banded).unwrap();
        let b = simulate_with(&k, &g, &t, &base_boundary(), LinearSolver::Pcg).unwrap();
        for (u, v) in a.heads.iter().zip(&b.heads) {
            assert!((u - v).abs() < 1e-7);
        }
        let sa = steady_state_with(&k, &g, &base_boundary(), LinearSolver::Banded).unwrap();
        let sb = steady_state_with(&k, &g, &base_boundary(), LinearSolver::Pcg).unwrap();
        for (u, v) in sa.iter().zip(&sb) {
            assert!((u - v).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_bad_conductivity() {
        let g = GridSpec::covering(5, 5, 1.0, 1.0, 0.0, 0.0).unwrap();
        let t = TimeSpec { dt: 0.1, steps: 1 };
        let mut k = vec![1.0; 25];
        k[3] = 0.0;
        assert!(matches!(simulate(&k, &g, &t, &base_boundary()), Err(Error::InvalidArgument(_))));
        assert!(simulate(&[1.0; 24], &g, &t, &base_boundary()).is_err());
    }

    #[test]
    fn labeled_extraction() {
        let g = GridSpec::covering(6, 5, 60.0, 50.0, 0.0, 0.0).unwrap();
        let t = TimeSpec { dt: 0.2, steps: 3 };
        let r = simulate(&vec![1.0; g.cells()], &g, &t, &base_boundary()).unwrap();
        let total = 3 * g.cells();
        let all = extract_labeled(&r, total, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(all.len(), total);
        let mut keys: Vec<(u64, u64, u64)> =
            all.iter().map(|p| (p.t.to_bits(), p.x.to_bits(), p.y.to_bits())).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), total);
        assert!(extract_labeled(&r, total + 1, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
        let a = extract_labeled(&r, 7, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = extract_labeled(&r, 7, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let one = extract_labeled(&r, 1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap()[0];
        let step = (one.t / 0.2).round() as usize;
        let col = ((one.x - 5.0) / 10.0).round() as usize;
        let row = ((one.y - 5.0) / 10.0).round() as usize;
        assert_eq!(one.h, r.head(step, row, col));
    }
}
