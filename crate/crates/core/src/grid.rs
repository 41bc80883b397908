//! Space-time discretization and boundary data shared by the solver, the
//! trainer and the Monte Carlo harness.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Cell-centered rectangular grid. Row index runs along y, column along x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub y0: f64,
}

impl GridSpec {
    /// Grid of `nx * ny` equal cells covering `[x0, x0+lx] x [y0, y0+ly]`.
    pub fn covering(nx: usize, ny: usize, lx: f64, ly: f64, x0: f64, y0: f64) -> Result<Self> {
        let g = GridSpec {
            nx,
            ny,
            dx: lx / nx as f64,
            dy: ly / ny as f64,
            x0,
            y0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(invalid("grid needs at least 2 cells per axis"));
        }
        if !(self.dx > 0.0 && self.dy > 0.0) || !self.dx.is_finite() || !self.dy.is_finite() {
            return Err(invalid("grid spacing must be positive and finite"));
        }
        if !self.x0.is_finite() || !self.y0.is_finite() {
            return Err(invalid("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn lx(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn ly(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    pub fn center_x(&self, col: usize) -> f64 {
        self.x0 + (col as f64 + 0.5) * self.dx
    }

    pub fn center_y(&self, row: usize) -> f64 {
        self.y0 + (row as f64 + 0.5) * self.dy
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.nx + col
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpec {
    pub dt: f64,
    pub steps: usize,
}

impl TimeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("time step must be positive"));
        }
        if self.steps == 0 {
            return Err(invalid("at least one time step is required"));
        }
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        self.dt * self.steps as f64
    }

    /// End-of-step time for 1-based step `k`.
    pub fn time_of(&self, step: usize) -> f64 {
        self.dt * step as f64
    }
}

/// Constant-head ends along x, prescribed flux on the y faces, uniform
/// initial head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub h_left: f64,
    pub h_right: f64,
    #[serde(default)]
    pub flux: f64,
    pub h_init: f64,
    pub specific_storage: f64,
}

impl BoundarySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_left.is_finite() && self.h_right.is_finite() && self.h_init.is_finite()) {
            return Err(invalid("boundary heads must be finite"));
        }
        if !self.flux.is_finite() {
            return Err(invalid("boundary flux must be finite"));
        }
        if !(self.specific_storage > 0.0) {
            return Err(invalid("specific storage must be positive"));
        }
        Ok(())
    }

    pub fn with_heads(&self, h_left: f64, h_right: f64) -> Self {
        BoundarySpec {
            h_left,
            h_right,
            ..*self
        }
    }
}
