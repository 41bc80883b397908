//! Hard imposition of the constant-head ends:
//! `h = h0 (1 - s) + hL s + s (1 - s) NN` with `s = (x - x0) / Lx`.

use super::Jet;
use crate::error::{invalid, Result};

fn check(x: f64, x0: f64, lx: f64) -> Result<f64> {
    if !(lx > 0.0) {
        return Err(invalid("domain length must be positive"));
    }
    let s = (x - x0) / lx;
    if !(-1e-12..=1.0 + 1e-12).contains(&s) {
        return Err(invalid("x outside the Dirichlet interval"));
    }
    Ok(s)
}

/// Constrained jet from the raw network jet at abscissa `x`.
pub fn apply_hard_bc(raw: &Jet, x: f64, h0: f64, hl: f64, x0: f64, lx: f64) -> Result<Jet> {
    let s = check(x, x0, lx)?;
    let g = s * (1.0 - s);
    let dg = (1.0 - 2.0 * s) / lx;
    Ok(Jet {
        value: h0 * (1.0 - s) + hl * s + g * raw.value,
        dt: g * raw.dt,
        dx: (hl - h0) / lx + dg * raw.value + g * raw.dx,
        dy: g * raw.dy,
        dxx: -2.0 / (lx * lx) * raw.value + 2.0 * dg * raw.dx + g * raw.dxx,
        dyy: g * raw.dyy,
    })
}

/// Pull an adjoint of the constrained jet back to the raw jet.
pub fn hard_bc_adjoint(bar: &Jet, x: f64, x0: f64, lx: f64) -> Jet {
    let s = (x - x0) / lx;
    let g = s * (1.0 - s);
    let dg = (1.0 - 2.0 * s) / lx;
    Jet {
        value: g * bar.value + dg * bar.dx - 2.0 / (lx * lx) * bar.dxx,
        dt: g * bar.dt,
        dx: g * bar.dx + 2.0 * dg * bar.dxx,
        dy: g * bar.dy,
        dxx: g * bar.dxx,
        dyy: g * bar.dyy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw() -> Jet {
        Jet {
            value: 3.7,
            dt: -0.2,
            dx: 0.01,
            dy: 0.4,
            dxx: -1e-3,
            dyy: 2e-4,
        }
    }

    #[test]
    fn endpoints_are_exact() {
        let a = apply_hard_bc(&raw(), 0.0, 202.0, 200.0, 0.0, 1020.0).unwrap();
        let b = apply_hard_bc(&raw(), 1020.0, 202.0, 200.0, 0.0, 1020.0).unwrap();
        assert_eq!(a.value, 202.0);
        assert_eq!(b.value, 200.0);
    }

    #[test]
    fn zero_network_gives_linear_interpolant() {
        let j = apply_hard_bc(&Jet::ZERO, 255.0, 202.0, 200.0, 0.0, 1020.0).unwrap();
        assert!((j.value - 201.5).abs() < 1e-12);
        assert_eq!(j.dx, -2.0 / 1020.0);
        assert_eq!(j.dxx, 0.0);
        assert_eq!((j.dt, j.dy, j.dyy), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_points_outside() {
        assert!(apply_hard_bc(&raw(), -1.0, 202.0, 200.0, 0.0, 1020.0).is_err());
        assert!(apply_hard_bc(&raw(), 1021.0, 202.0, 200.0, 0.0, 1020.0).is_err());
    }

    #[test]
    fn adjoint_is_transpose_of_linear_part() {
        // the map raw -> constrained is affine; check <bar, J r> = <J^T bar, r>
        let (x, x0, lx) = (313.0, 0.0, 1020.0);
        let r = raw();
        let zero = apply_hard_bc(&Jet::ZERO, x, 202.0, 200.0, x0, lx).unwrap().to_array();
        let jr = apply_hard_bc(&r, x, 202.0, 200.0, x0, lx).unwrap().to_array();
        let bar = Jet {
            value: 0.3,
            dt: -1.1,
            dx: 2.0,
            dy: 0.7,
            dxx: 5.0,
            dyy: -0.4,
        };
        let lhs: f64 = bar.to_array().iter().zip(jr.iter().zip(&zero)).map(|(b, (a, z))| b * (a - z)).sum();
        let back = hard_bc_adjoint(&bar, x, x0, lx).to_array();
        let rhs: f64 = back.iter().zip(r.to_array()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }
}
