//! Fully-connected swish network evaluated together with the input
//! derivatives needed by the flow residual.
//!
//! Input layout is `[t, x, y, xi_1..xi_n, extras..]`. The coordinates `t, x,
//! y` and any trailing extras are mapped affinely before entering the
//! network; the `xi` block is passed through untouched. Jets are reported in
//! physical units.

mod bc;
mod tape;

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bc::{apply_hard_bc, hard_bc_adjoint};
pub use tape::{JetMode, Tape, CHUNK};

use crate::error::{invalid, Error, Result};
use crate::parallel::map_chunks;

/// `normalized = scale * value + shift`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub scale: f64,
    pub shift: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        scale: 1.0,
        shift: 0.0,
    };

    /// Maps `[lo, hi]` onto `[-1, 1]`.
    pub fn unit(lo: f64, hi: f64) -> Self {
        let scale = 2.0 / (hi - lo);
        Affine {
            scale,
            shift: -1.0 - lo * scale,
        }
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        self.scale * v + self.shift
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_width: usize,
    pub hidden: Vec<usize>,
    pub beta: f64,
    /// Maps for `t`, `x`, `y`.
    pub coords: [Affine; 3],
    /// Maps for trailing non-`xi` inputs (boundary heads and variance for
    /// the composite surrogate).
    #[serde(default)]
    pub extras: Vec<Affine>,
}

impl NetworkSpec {
    pub fn new(n_xi: usize, hidden: Vec<usize>, coords: [Affine; 3], extras: Vec<Affine>) -> Self {
        NetworkSpec {
            input_width: 3 + n_xi + extras.len(),
            hidden,
            beta: 1.0,
            coords,
            extras,
        }
    }

    pub fn n_xi(&self) -> usize {
        self.input_width - 3 - self.extras.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width < 3 + self.extras.len() {
            return Err(invalid("input width too small for coordinates and extras"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden widths must be at least 1"));
        }
        if !(self.beta > 0.0) {
            return Err(invalid("swish beta must be positive"));
        }
        let maps = self.coords.iter().chain(&self.extras);
        if maps.clone().any(|a| !(a.scale.is_finite() && a.shift.is_finite() && a.scale != 0.0)) {
            return Err(invalid("normalization maps must be finite and invertible"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input_width;
        for &w in &self.hidden {
            shapes.push((fan_in, w));
            fan_in = w;
        }
        shapes.push((fan_in, 1));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Normalized value of input coordinate `i`.
    #[inline]
    pub(crate) fn normalize(&self, i: usize, v: f64) -> f64 {
        if i < 3 {
            self.coords[i].apply(v)
        } else {
            let first_extra = self.input_width - self.extras.len();
            if i >= first_extra {
                self.extras[i - first_extra].apply(v)
            } else {
                v
            }
        }
    }
}

/// Network weights and biases, stored flat: for each layer the row-major
/// `fan_out x fan_in` weight matrix followed by its bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub shapes: Vec<(usize, usize)>,
    pub values: Vec<f64>,
}

impl Parameters {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Parameters {
            shapes: spec.layer_shapes(),
            values: vec![0.0; spec.parameter_count()],
        }
    }

    pub fn from_values(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.parameter_count() {
            return Err(Error::Shape("parameter count does not match the network".into()));
        }
        Ok(Parameters {
            shapes: spec.layer_shapes(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Offset of layer `l`'s weights in [`values`](Self::values).
    pub fn offset(&self, l: usize) -> usize {
        self.shapes[..l].iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = self.shapes[l];
        let off = self.offset(l);
        let w = &self.values[off..off + fan_in * fan_out];
        let b = &self.values[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        (w, b)
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (fan_in, fan_out) = self.shapes[l];
        let off = self.offset(l);
        let (w, rest) = self.values[off..].split_at_mut(fan_in * fan_out);
        (w, &mut rest[..fan_out])
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.shapes != spec.layer_shapes() || self.values.len() != spec.parameter_count() {
            return Err(Error::Shape("parameters do not match the network".into()));
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_parameters<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Parameters {
    let mut p = Parameters::zeros(spec);
    for l in 0..p.shapes.len() {
        let (fan_in, fan_out) = p.shapes[l];
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let (w, _) = p.layer_mut(l);
        for v in w.iter_mut() {
            *v = rng.random_range(-bound..=bound);
        }
    }
    p
}

/// Network output with its input derivatives, in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jet {
    pub value: f64,
    pub dt: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dyy: f64,
}

impl Jet {
    pub const ZERO: Jet = Jet {
        value: 0.0,
        dt: 0.0,
        dx: 0.0,
        dy: 0.0,
        dxx: 0.0,
        dyy: 0.0,
    };

    pub fn to_array(&self) -> [f64; 6] {
        [self.value, self.dt, self.dx, self.dy, self.dxx, self.dyy]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Jet {
            value: a[0],
            dt: a[1],
            dx: a[2],
            dy: a[3],
            dxx: a[4],
            dyy: a[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

fn check_input(spec: &NetworkSpec, params: &Parameters, input: &[f64]) -> Result<()> {
    params.check(spec)?;
    if input.len() != spec.input_width {
        return Err(Error::Shape("input width does not match the network".into()));
    }
    Ok(())
}

/// Scalar head value at one input point.
pub fn forward(spec: &NetworkSpec, params: &Parameters, input: &[f64]) -> Result<f64> {
    check_input(spec, params, input)?;
    let mut tape = Tape::new(spec, 1, JetMode::Value);
    tape.record(spec, params, input);
    Ok(tape.value(0))
}

/// Value and input derivatives at one point.
pub fn forward_jet(spec: &NetworkSpec, params: &Parameters, input: &[f64]) -> Result<Jet> {
    check_input(spec, params, input)?;
    let mut tape = Tape::new(spec, 1, JetMode::Full);
    tape.record(spec, params, input);
    Ok(tape.jet(0))
}

/// Values at many points; `inputs` is row-major with `input_width` columns.
pub fn forward_batch(spec: &NetworkSpec, params: &Parameters, inputs: &[f64]) -> Result<Vec<f64>> {
    params.check(spec)?;
    let w = spec.input_width;
    if !inputs.len().is_multiple_of(w) {
        return Err(Error::Shape("input rows do not match the network width".into()));
    }
    let rows = inputs.len() / w;
    let parts = map_chunks(rows, 8 * CHUNK, |range| {
        let mut tape = Tape::new(spec, CHUNK, JetMode::Value);
        let mut out = Vec::with_capacity(range.len());
        let mut start = range.start;
        while start < range.end {
            let end = (start + CHUNK).min(range.end);
            tape.record(spec, params, &inputs[start * w..end * w]);
            out.extend((0..end - start).map(|p| tape.value(p)));
            start = end;
        }
        out
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Jets at many points; derivative fields are zero in [`JetMode::Value`].
pub fn forward_jets(spec: &NetworkSpec, params: &Parameters, inputs: &[f64], mode: JetMode) -> Result<Vec<Jet>> {
    params.check(spec)?;
    let w = spec.input_width;
    if !inputs.len().is_multiple_of(w) {
        return Err(Error::Shape("input rows do not match the network width".into()));
    }
    let rows = inputs.len() / w;
    let parts = map_chunks(rows, 8 * CHUNK, |range| {
        let mut tape = Tape::new(spec, CHUNK, mode);
        let mut out = Vec::with_capacity(range.len());
        let mut start = range.start;
        while start < range.end {
            let end = (start + CHUNK).min(range.end);
            tape.record(spec, params, &inputs[start * w..end * w]);
            out.extend((0..end - start).map(|p| tape.jet(p)));
            start = end;
        }
        out
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Reverse-mode gradient of `sum_i loss_i` with respect to the parameters.
///
/// `point_loss(i, jet)` returns the loss contribution of row `i` together
/// with its derivative with respect to each jet component. In
/// [`JetMode::Value`] only the value component is computed and read.
/// Rows are reduced in fixed-size chunks in a fixed order.
pub fn loss_gradient<F>(
    spec: &NetworkSpec,
    params: &Parameters,
    inputs: &[f64],
    mode: JetMode,
    point_loss: F,
) -> Result<(f64, Vec<f64>)>
where
    F: Fn(usize, &Jet) -> (f64, Jet) + Sync,
{
    params.check(spec)?;
    let w = spec.input_width;
    if !inputs.len().is_multiple_of(w) {
        return Err(Error::Shape("input rows do not match the network width".into()));
    }
    let rows = inputs.len() / w;
    let parts = map_chunks(rows, 8 * CHUNK, |range| -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new(spec, CHUNK, mode);
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let mut adjoint = [Jet::ZERO; CHUNK];
        let mut start = range.start;
        while start < range.end {
            let end = (start + CHUNK).min(range.end);
            tape.record(spec, params, &inputs[start * w..end * w]);
            for p in 0..end - start {
                let (l, bar) = point_loss(start + p, &tape.jet(p));
                if !l.is_finite() || !bar.is_finite() {
                    return Err(Error::NonFinitePoint { index: start + p });
                }
                loss += l;
                adjoint[p] = bar;
            }
            tape.backward(spec, params, &adjoint[..end - start], &mut grad);
            start = end;
        }
        Ok((loss, grad))
    });
    let mut total = 0.0;
    let mut grad = vec![0.0; params.len()];
    for part in parts {
        let (l, g) = part?;
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total, grad))
}
