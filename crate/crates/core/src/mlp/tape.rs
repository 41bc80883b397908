//! Batched forward jet propagation and its reverse sweep.
//!
//! Buffers are laid out `[component][neuron][point]` so that every inner
//! loop runs over points with unit stride. Components are value, d/dt,
//! d/dx, d/dy, d2/dx2, d2/dy2 with respect to the normalized coordinates;
//! conversion to physical units happens only in [`Tape::jet`] and
//! [`Tape::backward`].

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use super::{Jet, NetworkSpec, Parameters};

/// Points per recorded block.
pub const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetMode {
    /// Value only.
    Value,
    /// Value, first derivatives in t, x, y and second derivatives in x, y.
    Full,
}

impl JetMode {
    fn components(self) -> usize {
        match self {
            JetMode::Value => 1,
            JetMode::Full => 6,
        }
    }
}

/// Forward record of one block of points, kept for the reverse sweep.
#[derive(Debug, Clone)]
pub struct Tape {
    mode: JetMode,
    stride: usize,
    n: usize,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    /// sigma', sigma'', sigma''' at each hidden pre-activation.
    deriv: Vec<Vec<f64>>,
    out: Vec<f64>,
    bar_a: Vec<f64>,
    bar_z: Vec<f64>,
    factors: [f64; 6],
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

/// `out[c][j][p] = sum_i W[j][i] in[c][i][p] (+ b[j] for c = 0)`.
///
/// With `raw_input` the input holds only values; its derivative components
/// are the unit vectors of the first three inputs.
#[allow(clippy::too_many_arguments)]
fn linear_forward(
    w: &[f64],
    b: &[f64],
    fan_in: usize,
    fan_out: usize,
    input: &[f64],
    raw_input: bool,
    comps: usize,
    n: usize,
    stride: usize,
    out: &mut [f64],
) {
    for c in 0..comps {
        for j in 0..fan_out {
            let row = &w[j * fan_in..(j + 1) * fan_in];
            let dst = &mut out[(c * fan_out + j) * stride..][..n];
            if c == 0 {
                dst.fill(b[j]);
            } else if raw_input {
                dst.fill(if c <= 3 { row[c - 1] } else { 0.0 });
                continue;
            } else {
                dst.fill(0.0);
            }
            for (i, &wji) in row.iter().enumerate() {
                axpy(wji, &input[(c * fan_in + i) * stride..][..n], dst);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn linear_backward(
    w: &[f64],
    fan_in: usize,
    fan_out: usize,
    input: &[f64],
    raw_input: bool,
    comps: usize,
    n: usize,
    stride: usize,
    bar_out: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    bar_in: Option<&mut [f64]>,
) {
    for j in 0..fan_out {
        let grow = &mut gw[j * fan_in..(j + 1) * fan_in];
        for c in 0..comps {
            let bo = &bar_out[(c * fan_out + j) * stride..][..n];
            if c == 0 {
                gb[j] += bo.iter().sum::<f64>();
            }
            if raw_input && c > 0 {
                if c <= 3 {
                    grow[c - 1] += bo.iter().sum::<f64>();
                }
                continue;
            }
            for (i, g) in grow.iter_mut().enumerate() {
                *g += dot(bo, &input[(c * fan_in + i) * stride..][..n]);
            }
        }
    }
    if let Some(bar_in) = bar_in {
        for c in 0..comps {
            for i in 0..fan_in {
                bar_in[(c * fan_in + i) * stride..][..n].fill(0.0);
            }
            for j in 0..fan_out {
                let bo = &bar_out[(c * fan_out + j) * stride..][..n];
                let row = &w[j * fan_in..(j + 1) * fan_in];
                for (i, &wji) in row.iter().enumerate() {
                    axpy(wji, bo, &mut bar_in[(c * fan_in + i) * stride..][..n]);
                }
            }
        }
    }
}

impl Tape {
    pub fn new(spec: &NetworkSpec, capacity: usize, mode: JetMode) -> Self {
        let comps = mode.components();
        let stride = capacity.max(1);
        let widest = spec
            .hidden
            .iter()
            .copied()
            .chain([spec.input_width, 1])
            .max()
            .unwrap_or(1);
        let [st, sx, sy] = [spec.coords[0].scale, spec.coords[1].scale, spec.coords[2].scale];
        Tape {
            mode,
            stride,
            n: 0,
            input: vec![0.0; spec.input_width * stride],
            pre: spec.hidden.iter().map(|w| vec![0.0; comps * w * stride]).collect(),
            post: spec.hidden.iter().map(|w| vec![0.0; comps * w * stride]).collect(),
            deriv: spec.hidden.iter().map(|w| vec![0.0; 3 * w * stride]).collect(),
            out: vec![0.0; comps * stride],
            bar_a: vec![0.0; comps * widest * stride],
            bar_z: vec![0.0; comps * widest * stride],
            factors: [1.0, st, sx, sy, sx * sx, sy * sy],
        }
    }

    pub fn mode(&self) -> JetMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Run the network on up to `capacity` row-major input rows.
    pub fn record(&mut self, spec: &NetworkSpec, params: &Parameters, inputs: &[f64]) {
        let m = spec.input_width;
        let n = inputs.len() / m;
        assert!(n <= self.stride, "block larger than tape capacity");
        self.n = n;
        let stride = self.stride;
        let comps = self.mode.components();
        for p in 0..n {
            for i in 0..m {
                self.input[i * stride + p] = spec.normalize(i, inputs[p * m + i]);
            }
        }
        let beta = spec.beta;
        let layers = spec.hidden.len();
        for l in 0..=layers {
            let (fan_in, fan_out) = params.shapes[l];
            let (w, b) = params.layer(l);
            let (input, raw): (&[f64], bool) = if l == 0 {
                (&self.input, true)
            } else {
                (&self.post[l - 1], false)
            };
            let dst: &mut [f64] = if l == layers { &mut self.out } else { &mut self.pre[l] };
            linear_forward(w, b, fan_in, fan_out, input, raw, comps, n, stride, dst);
            if l == layers {
                break;
            }
            let a = &self.pre[l];
            let z = &mut self.post[l];
            let d = &mut self.deriv[l];
            let cw = fan_out * stride;
            for j in 0..fan_out {
                for p in 0..n {
                    let k = j * stride + p;
                    let a0 = a[k];
                    let s = 1.0 / (1.0 + (-beta * a0).exp());
                    let q = s * (1.0 - s);
                    let ba = beta * a0;
                    let r = 1.0 - 2.0 * s;
                    let s1 = s + ba * q;
                    let s2 = beta * q * (2.0 + ba * r);
                    let s3 = beta * beta * q * (r * (3.0 + ba * r) - 2.0 * ba * q);
                    z[k] = a0 * s;
                    d[k] = s1;
                    d[cw + k] = s2;
                    d[2 * cw + k] = s3;
                    if comps == 6 {
                        let (at, ax, ay) = (a[cw + k], a[2 * cw + k], a[3 * cw + k]);
                        let (axx, ayy) = (a[4 * cw + k], a[5 * cw + k]);
                        z[cw + k] = s1 * at;
                        z[2 * cw + k] = s1 * ax;
                        z[3 * cw + k] = s1 * ay;
                        z[4 * cw + k] = s2 * ax * ax + s1 * axx;
                        z[5 * cw + k] = s2 * ay * ay + s1 * ayy;
                    }
                }
            }
        }
    }

    /// Network value at point `p` of the current block.
    #[inline]
    pub fn value(&self, p: usize) -> f64 {
        self.out[p]
    }

    /// Jet in physical units at point `p`; derivative fields are zero in
    /// value mode.
    pub fn jet(&self, p: usize) -> Jet {
        match self.mode {
            JetMode::Value => Jet {
                value: self.out[p],
                ..Jet::ZERO
            },
            JetMode::Full => {
                let s = self.stride;
                let f = &self.factors;
                Jet {
                    value: self.out[p],
                    dt: self.out[s + p] * f[1],
                    dx: self.out[2 * s + p] * f[2],
                    dy: self.out[3 * s + p] * f[3],
                    dxx: self.out[4 * s + p] * f[4],
                    dyy: self.out[5 * s + p] * f[5],
                }
            }
        }
    }

    /// Accumulate into `grad` the parameter gradient of
    /// `sum_p <adjoint[p], jet(p)>`.
    pub fn backward(&mut self, spec: &NetworkSpec, params: &Parameters, adjoint: &[Jet], grad: &mut [f64]) {
        let n = self.n;
        let stride = self.stride;
        let comps = self.mode.components();
        let layers = spec.hidden.len();
        // output adjoint in normalized units
        for (p, bar) in adjoint.iter().enumerate().take(n) {
            let a = bar.to_array();
            for c in 0..comps {
                self.bar_a[c * stride + p] = a[c] * self.factors[c];
            }
        }
        let mut offsets = Vec::with_capacity(layers + 1);
        let mut off = 0;
        for &(i, o) in &params.shapes {
            offsets.push(off);
            off += i * o + o;
        }
        for l in (0..=layers).rev() {
            let (fan_in, fan_out) = params.shapes[l];
            let (w, _) = params.layer(l);
            let (gw, rest) = grad[offsets[l]..].split_at_mut(fan_in * fan_out);
            let gb = &mut rest[..fan_out];
            let (input, raw): (&[f64], bool) = if l == 0 {
                (&self.input, true)
            } else {
                (&self.post[l - 1], false)
            };
            let bar_in = if l > 0 { Some(&mut self.bar_z[..]) } else { None };
            linear_backward(
                w, fan_in, fan_out, input, raw, comps, n, stride, &self.bar_a, gw, gb, bar_in,
            );
            if l == 0 {
                break;
            }
            // through the activation of hidden layer l-1
            let h = l - 1;
            let width = spec.hidden[h];
            let a = &self.pre[h];
            let d = &self.deriv[h];
            let zb = &self.bar_z;
            let ab = &mut self.bar_a;
            let cw = width * stride;
            for j in 0..width {
                for p in 0..n {
                    let k = j * stride + p;
                    let s1 = d[k];
                    if comps == 1 {
                        ab[k] = zb[k] * s1;
                        continue;
                    }
                    let (s2, s3) = (d[cw + k], d[2 * cw + k]);
                    let (at, ax, ay) = (a[cw + k], a[2 * cw + k], a[3 * cw + k]);
                    let (axx, ayy) = (a[4 * cw + k], a[5 * cw + k]);
                    let (z0, zt, zx, zy, zxx, zyy) =
                        (zb[k], zb[cw + k], zb[2 * cw + k], zb[3 * cw + k], zb[4 * cw + k], zb[5 * cw + k]);
                    ab[k] = z0 * s1
                        + s2 * (zt * at + zx * ax + zy * ay)
                        + zxx * (s3 * ax * ax + s2 * axx)
                        + zyy * (s3 * ay * ay + s2 * ayy);
                    ab[cw + k] = zt * s1;
                    ab[2 * cw + k] = zx * s1 + 2.0 * zxx * s2 * ax;
                    ab[3 * cw + k] = zy * s1 + 2.0 * zyy * s2 * ay;
                    ab[4 * cw + k] = zxx * s1;
                    ab[5 * cw + k] = zyy * s1;
                }
            }
        }
    }
}
