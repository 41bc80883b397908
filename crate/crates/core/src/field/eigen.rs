//! One-dimensional eigenproblem of the unit-variance exponential kernel
//! `exp(-|x - x'| / eta)` on `[0, L]`.
//!
//! The eigenfunctions are `(eta*w*cos(w*x) + sin(w*x)) / norm` with
//! eigenvalue `2*eta / (1 + eta^2 w^2)`, where the frequency `w` is a
//! positive root of `(eta^2 w^2 - 1) sin(wL) - 2 eta w cos(wL) = 0`.
//! Exactly one root lies in each interval `(k*pi/L, (k+1)*pi/L)`.

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_legendre, integrate};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair1d {
    /// Eigenvalue of the unit-variance kernel (length units).
    pub eigenvalue: f64,
    /// Frequency root `w` (1/length).
    pub frequency: f64,
    /// `eta * w`, the cosine coefficient.
    pub cos_coeff: f64,
    /// L2 norm of the unnormalized eigenfunction over `[0, L]`.
    pub norm: f64,
}

impl Eigenpair1d {
    /// Eigenfunction value at local coordinate `u` in `[0, L]`.
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        let (s, c) = (self.frequency * u).sin_cos();
        (self.cos_coeff * c + s) / self.norm
    }

    /// Value and first derivative.
    #[inline]
    pub fn value_and_slope(&self, u: f64) -> (f64, f64) {
        let w = self.frequency;
        let (s, c) = (w * u).sin_cos();
        (
            (self.cos_coeff * c + s) / self.norm,
            w * (c - self.cos_coeff * s) / self.norm,
        )
    }
}

fn characteristic(w: f64, eta: f64, len: f64) -> f64 {
    let ew = eta * w;
    let (s, c) = (w * len).sin_cos();
    (ew * ew - 1.0) * s - 2.0 * ew * c
}

/// Leading `count` eigenpairs, ordered by strictly decreasing eigenvalue.
pub fn solve_eigenpairs_1d(eta: f64, len: f64, count: usize) -> Result<Vec<Eigenpair1d>> {
    if !(eta > 0.0 && eta.is_finite()) || !(len > 0.0 && len.is_finite()) {
        return Err(invalid("correlation length and domain length must be positive"));
    }
    if count == 0 {
        return Err(invalid("eigenpair count must be at least 1"));
    }
    let step = PI / len;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let mut lo = if k == 0 { step * 1e-9 } else { k as f64 * step };
        let mut hi = (k + 1) as f64 * step;
        let mut flo = characteristic(lo, eta, len);
        let fhi = characteristic(hi, eta, len);
        if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
            return Err(Error::RootBracketing { index: k });
        }
        let mut iter = 0;
        while hi - lo > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            let fm = characteristic(mid, eta, len);
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
            iter += 1;
            if iter > 200 {
                return Err(Error::RootBracketing { index: k });
            }
        }
        let w = 0.5 * (lo + hi);
        let a = eta * w;
        // closed-form integral of (a cos(wu) + sin(wu))^2 over [0, L]
        let s2 = (2.0 * w * len).sin() / (4.0 * w);
        let sl = (w * len).sin();
        let norm2 = a * a * (0.5 * len + s2) + (0.5 * len - s2) + a * sl * sl / w;
        out.push(Eigenpair1d {
            eigenvalue: 2.0 * eta / (1.0 + a * a),
            frequency: w,
            cos_coeff: a,
            norm: norm2.sqrt(),
        });
    }
    Ok(out)
}

/// Worst relative Fredholm residual of `pair` over `points` evenly spaced
/// check points: `max |int C(x,x') f(x') dx' - lambda f(x)| / (lambda max|f|)`.
pub fn fredholm_residual(pair: &Eigenpair1d, eta: f64, len: f64, points: usize) -> f64 {
    let rule = gauss_legendre(16);
    let panels = 16 + (pair.frequency * len / PI).ceil() as usize * 2;
    let mut worst = 0.0f64;
    let mut fmax = 0.0f64;
    for i in 0..points {
        let x = len * (i as f64 + 0.5) / points as f64;
        let kernel_f = |xp: f64| (-(x - xp).abs() / eta).exp() * pair.value(xp);
        let left = integrate(kernel_f, 0.0, x, panels, &rule);
        let right = integrate(kernel_f, x, len, panels, &rule);
        let fx = pair.value(x);
        fmax = fmax.max(fx.abs());
        worst = worst.max((left + right - pair.eigenvalue * fx).abs());
    }
    worst / (pair.eigenvalue * fmax)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenfunctions_have_unit_norm() {
        let rule = gauss_legendre(16);
        for &(eta, len) in &[(408.0, 1020.0), (1.0, 1.0), (0.05, 2.0)] {
            for p in solve_eigenpairs_1d(eta, len, 12).unwrap() {
                let n2 = integrate(|u| p.value(u).powi(2), 0.0, len, 64, &rule);
                assert!((n2 - 1.0).abs() < 1e-8, "norm {n2} for eta {eta}");
            }
        }
    }

    #[test]
    fn base_case_eigenvalues_positive_and_descending() {
        let pairs = solve_eigenpairs_1d(408.0, 1020.0, 30).unwrap();
        assert_eq!(pairs.len(), 30);
        assert!(pairs.iter().all(|p| p.eigenvalue > 0.0));
        assert!(pairs.windows(2).all(|w| w[0].eigenvalue > w[1].eigenvalue));
    }

    #[test]
    fn eigenvalue_sum_approaches_trace_from_below() {
        let len = 3.0;
        let pairs = solve_eigenpairs_1d(0.7, len, 2000).unwrap();
        let total: f64 = pairs.iter().map(|p| p.eigenvalue).sum();
        assert!(total < len);
        assert!(total > 0.999 * len, "sum {total}");
    }

    #[test]
    fn fredholm_equation_holds() {
        for &(eta, len) in &[(408.0, 1020.0), (204.0, 1020.0), (1.0, 1.0)] {
            for p in solve_eigenpairs_1d(eta, len, 20).unwrap() {
                let r = fredholm_residual(&p, eta, len, 50);
                assert!(r <= 1e-6, "residual {r} at eta {eta}");
            }
        }
    }

    #[test]
    fn slope_matches_finite_difference() {
        let p = solve_eigenpairs_1d(408.0, 1020.0, 5).unwrap()[4];
        let u = 333.0;
        let h = 1e-3;
        let fd = (p.value(u + h) - p.value(u - h)) / (2.0 * h);
        let (_, slope) = p.value_and_slope(u);
        assert!((fd - slope).abs() < 1e-9 * slope.abs().max(1e-6));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(solve_eigenpairs_1d(0.0, 1.0, 3).is_err());
        assert!(solve_eigenpairs_1d(1.0, -1.0, 3).is_err());
        assert!(solve_eigenpairs_1d(1.0, 1.0, 0).is_err());
    }
}
