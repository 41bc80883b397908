//! Karhunen–Loève representation of a Gaussian log-conductivity field with
//! separable exponential covariance.

mod eigen;
mod quadrature;

use alloc::vec::Vec;
use core::cmp::Ordering;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use eigen::{fredholm_residual, solve_eigenpairs_1d, Eigenpair1d};

use crate::error::{invalid, Error, Result};
use crate::grid::GridSpec;

/// Number of 1D modes per axis from which 2D products are formed.
pub const MODE_BUDGET: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    /// Variance of ln K.
    pub variance: f64,
    pub corr_x: f64,
    pub corr_y: f64,
    pub lx: f64,
    pub ly: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub y0: f64,
    /// Mean of ln K.
    #[serde(default)]
    pub mean_logk: f64,
}

impl CovarianceSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.variance, self.corr_x, self.corr_y, self.lx, self.ly];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("variance, correlation lengths and domain lengths must be positive"));
        }
        if !(self.x0.is_finite() && self.y0.is_finite() && self.mean_logk.is_finite()) {
            return Err(invalid("origin and mean must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Smallest number of modes whose energy reaches the fraction.
    Energy(f64),
    Modes(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KleMode {
    /// `variance * lambda_x * lambda_y`.
    pub eigenvalue: f64,
    pub ix: usize,
    pub iy: usize,
    pub x: Eigenpair1d,
    pub y: Eigenpair1d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KleModel {
    pub spec: CovarianceSpec,
    pub modes: Vec<KleMode>,
    pub energy_fraction: f64,
}

fn sorted_products(xs: &[Eigenpair1d], ys: &[Eigenpair1d], variance: f64) -> Vec<KleMode> {
    let mut all = Vec::with_capacity(xs.len() * ys.len());
    for (ix, x) in xs.iter().enumerate() {
        for (iy, y) in ys.iter().enumerate() {
            all.push(KleMode {
                eigenvalue: variance * x.eigenvalue * y.eigenvalue,
                ix,
                iy,
                x: *x,
                y: *y,
            });
        }
    }
    all.sort_by(|a, b| {
        b.eigenvalue
            .partial_cmp(&a.eigenvalue)
            .unwrap_or(Ordering::Equal)
            .then((a.ix, a.iy).cmp(&(b.ix, b.iy)))
    });
    all
}

impl KleModel {
    pub fn build(spec: CovarianceSpec, truncation: Truncation) -> Result<Self> {
        Self::build_with_budget(spec, truncation, MODE_BUDGET)
    }

    pub fn build_with_budget(
        spec: CovarianceSpec,
        truncation: Truncation,
        budget: usize,
    ) -> Result<Self> {
        spec.validate()?;
        let xs = solve_eigenpairs_1d(spec.corr_x, spec.lx, budget)?;
        let ys = if spec.corr_x == spec.corr_y && spec.lx == spec.ly {
            xs.clone()
        } else {
            solve_eigenpairs_1d(spec.corr_y, spec.ly, budget)?
        };
        let mut modes = sorted_products(&xs, &ys, spec.variance);
        let trace = spec.variance * spec.lx * spec.ly;
        let n = match truncation {
            Truncation::Energy(target) => {
                if !(target > 0.0 && target <= 1.0) {
                    return Err(invalid("target energy fraction must lie in (0, 1]"));
                }
                let mut acc = 0.0;
                let mut found = None;
                for (i, m) in modes.iter().enumerate() {
                    acc += m.eigenvalue;
                    if acc / trace >= target {
                        found = Some(i + 1);
                        break;
                    }
                }
                found.ok_or(Error::EnergyUnreachable {
                    target,
                    reachable: acc / trace,
                    budget,
                })?
            }
            Truncation::Modes(n) => {
                if n == 0 {
                    return Err(invalid("explicit mode count must be at least 1"));
                }
                if n > modes.len() {
                    return Err(Error::EnergyUnreachable {
                        target: f64::NAN,
                        reachable: 1.0,
                        budget,
                    });
                }
                n
            }
        };
        modes.truncate(n);
        let energy_fraction = modes.iter().map(|m| m.eigenvalue).sum::<f64>() / trace;
        Ok(KleModel {
            spec,
            modes,
            energy_fraction,
        })
    }

    /// Retained mode count `n`.
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Cumulative energy fraction after each retained mode.
    pub fn energy_curve(&self) -> Vec<f64> {
        let trace = self.spec.variance * self.spec.lx * self.spec.ly;
        let mut acc = 0.0;
        self.modes
            .iter()
            .map(|m| {
                acc += m.eigenvalue;
                acc / trace
            })
            .collect()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let s = &self.spec;
        let tx = 1e-9 * s.lx;
        let ty = 1e-9 * s.ly;
        x >= s.x0 - tx && x <= s.x0 + s.lx + tx && y >= s.y0 - ty && y <= s.y0 + s.ly + ty
    }

    fn check(&self, xi: &[f64], x: f64, y: f64) -> Result<()> {
        if xi.len() < self.modes.len() {
            return Err(invalid("xi vector shorter than the retained mode count"));
        }
        if !self.contains(x, y) {
            return Err(invalid("point outside the field domain"));
        }
        Ok(())
    }

    fn amplitude(&self, variance: Option<f64>) -> f64 {
        variance.map_or(1.0, |v| (v / self.spec.variance).sqrt())
    }

    /// Log-conductivity `Z` at `(x, y)`.
    pub fn log_k(&self, xi: &[f64], x: f64, y: f64) -> Result<f64> {
        self.log_k_with_variance(xi, x, y, None)
    }

    /// As [`log_k`](Self::log_k) with the field variance optionally replaced.
    pub fn log_k_with_variance(
        &self,
        xi: &[f64],
        x: f64,
        y: f64,
        variance: Option<f64>,
    ) -> Result<f64> {
        self.check(xi, x, y)?;
        let (u, v) = (x - self.spec.x0, y - self.spec.y0);
        let fluct: f64 = self
            .modes
            .iter()
            .zip(xi)
            .map(|(m, &k)| m.eigenvalue.sqrt() * m.x.value(u) * m.y.value(v) * k)
            .sum();
        Ok(self.spec.mean_logk + self.amplitude(variance) * fluct)
    }

    /// `(Z, dZ/dx, dZ/dy)` at `(x, y)`.
    pub fn log_k_gradient(
        &self,
        xi: &[f64],
        x: f64,
        y: f64,
        variance: Option<f64>,
    ) -> Result<(f64, f64, f64)> {
        self.check(xi, x, y)?;
        let (u, v) = (x - self.spec.x0, y - self.spec.y0);
        let (mut z, mut zx, mut zy) = (0.0, 0.0, 0.0);
        for (m, &k) in self.modes.iter().zip(xi) {
            let c = m.eigenvalue.sqrt() * k;
            let (fx, dfx) = m.x.value_and_slope(u);
            let (fy, dfy) = m.y.value_and_slope(v);
            z += c * fx * fy;
            zx += c * dfx * fy;
            zy += c * fx * dfy;
        }
        let a = self.amplitude(variance);
        Ok((self.spec.mean_logk + a * z, a * zx, a * zy))
    }

    /// Conductivity `exp(Z)` at every cell center, row-major `[row][col]`.
    pub fn field_on_grid(&self, xi: &[f64], grid: &GridSpec) -> Result<Vec<f64>> {
        self.field_on_grid_with_variance(xi, grid, None)
    }

    pub fn field_on_grid_with_variance(
        &self,
        xi: &[f64],
        grid: &GridSpec,
        variance: Option<f64>,
    ) -> Result<Vec<f64>> {
        grid.validate()?;
        if !self.contains(grid.x0, grid.y0) || !self.contains(grid.x0 + grid.lx(), grid.y0 + grid.ly()) {
            return Err(invalid("grid extends outside the field domain"));
        }
        if xi.len() < self.modes.len() {
            return Err(invalid("xi vector shorter than the retained mode count"));
        }
        let n = self.modes.len();
        let a = self.amplitude(variance);
        // separable factors tabulated once per axis
        let fx: Vec<f64> = (0..grid.nx)
            .flat_map(|c| {
                let u = grid.center_x(c) - self.spec.x0;
                self.modes.iter().map(move |m| m.x.value(u))
            })
            .collect();
        let fy: Vec<f64> = (0..grid.ny)
            .flat_map(|r| {
                let v = grid.center_y(r) - self.spec.y0;
                self.modes.iter().map(move |m| m.y.value(v))
            })
            .collect();
        let coef: Vec<f64> = self
            .modes
            .iter()
            .zip(xi)
            .map(|(m, &k)| m.eigenvalue.sqrt() * k)
            .collect();
        let mut out = Vec::with_capacity(grid.cells());
        for r in 0..grid.ny {
            let fyr = &fy[r * n..(r + 1) * n];
            for c in 0..grid.nx {
                let fxc = &fx[c * n..(c + 1) * n];
                let z: f64 = (0..n).map(|i| coef[i] * fxc[i] * fyr[i]).sum();
                out.push((self.spec.mean_logk + a * z).exp());
            }
        }
        Ok(out)
    }
}

/// `n` independent standard normal draws.
pub fn sample_xi<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn base_spec() -> CovarianceSpec {
        CovarianceSpec {
            variance: 1.0,
            corr_x: 408.0,
            corr_y: 408.0,
            lx: 1020.0,
            ly: 1020.0,
            x0: 0.0,
            y0: 0.0,
            mean_logk: 0.0,
        }
    }

    #[test]
    fn base_case_retains_about_twenty_terms() {
        let m = KleModel::build(base_spec(), Truncation::Energy(0.8)).unwrap();
        assert!((17..=23).contains(&m.len()), "n = {}", m.len());
        assert!(m.energy_fraction >= 0.8 && m.energy_fraction <= 1.0);
    }

    #[test]
    fn single_mode_energy_is_leading_eigenvalue_share() {
        let spec = CovarianceSpec { variance: 2.5, ..base_spec() };
        let m = KleModel::build(spec, Truncation::Modes(1)).unwrap();
        let expect = m.modes[0].eigenvalue / (2.5 * 1020.0 * 1020.0);
        assert_eq!(m.energy_fraction, expect);
    }

    #[test]
    fn modes_sorted_with_lexicographic_ties() {
        let m = KleModel::build(base_spec(), Truncation::Modes(40)).unwrap();
        for w in m.modes.windows(2) {
            assert!(w[0].eigenvalue >= w[1].eigenvalue);
            if w[0].eigenvalue == w[1].eigenvalue {
                assert!((w[0].ix, w[0].iy) < (w[1].ix, w[1].iy));
            }
        }
        // symmetric spec: the (0,1)/(1,0) pair ties exactly
        assert_eq!((m.modes[1].ix, m.modes[1].iy), (0, 1));
        assert_eq!((m.modes[2].ix, m.modes[2].iy), (1, 0));
    }

    #[test]
    fn unreachable_energy_asks_for_budget() {
        let err = KleModel::build_with_budget(base_spec(), Truncation::Energy(0.99), 3).unwrap_err();
        assert!(matches!(err, Error::EnergyUnreachable { budget: 3, .. }));
    }

    #[test]
    fn zero_xi_gives_mean() {
        let spec = CovarianceSpec { mean_logk: 0.7, ..base_spec() };
        let m = KleModel::build(spec, Truncation::Modes(10)).unwrap();
        let xi = [0.0; 10];
        assert_eq!(m.log_k(&xi, 100.0, 900.0).unwrap(), 0.7);
        let (_, gx, gy) = m.log_k_gradient(&xi, 100.0, 900.0, None).unwrap();
        assert_eq!((gx, gy), (0.0, 0.0));
    }

    #[test]
    fn single_mode_matches_factor_product() {
        let m = KleModel::build(base_spec(), Truncation::Modes(1)).unwrap();
        let mode = m.modes[0];
        let (x, y) = (250.0, 731.0);
        let expect = mode.eigenvalue.sqrt() * mode.x.value(x) * mode.y.value(y);
        assert!((m.log_k(&[1.0], x, y).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn short_xi_is_rejected() {
        let m = KleModel::build(base_spec(), Truncation::Modes(5)).unwrap();
        assert!(m.log_k(&[0.0; 4], 1.0, 1.0).is_err());
        assert!(m.log_k(&[0.0; 5], 1021.0, 1.0).is_err());
        // longer vectors are accepted; only the leading entries are read
        assert!(m.log_k(&[0.0; 9], 1.0, 1.0).is_ok());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = KleModel::build(base_spec(), Truncation::Energy(0.8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xi = sample_xi(m.len(), &mut rng);
        let h = 0.05;
        for &(x, y) in &[(300.0, 400.0), (810.0, 120.0), (510.0, 510.0)] {
            let (_, gx, gy) = m.log_k_gradient(&xi, x, y, None).unwrap();
            let fx = (m.log_k(&xi, x + h, y).unwrap() - m.log_k(&xi, x - h, y).unwrap()) / (2.0 * h);
            let fy = (m.log_k(&xi, x, y + h).unwrap() - m.log_k(&xi, x, y - h).unwrap()) / (2.0 * h);
            assert!((gx - fx).abs() <= 1e-5 * gx.abs().max(1e-8), "{gx} vs {fx}");
            assert!((gy - fy).abs() <= 1e-5 * gy.abs().max(1e-8), "{gy} vs {fy}");
        }
    }

    #[test]
    fn sample_xi_is_deterministic() {
        let a = sample_xi(20, &mut ChaCha8Rng::seed_from_u64(3));
        let b = sample_xi(20, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(sample_xi(0, &mut ChaCha8Rng::seed_from_u64(3)).is_empty());
    }

    #[test]
    fn field_on_grid_pointwise() {
        let m = KleModel::build(base_spec(), Truncation::Energy(0.8)).unwrap();
        let grid = GridSpec::covering(51, 51, 1020.0, 1020.0, 0.0, 0.0).unwrap();
        let xi = sample_xi(m.len(), &mut ChaCha8Rng::seed_from_u64(11));
        let k = m.field_on_grid(&xi, &grid).unwrap();
        assert_eq!(k.len(), 51 * 51);
        assert!(k.iter().all(|v| *v > 0.0));
        let (r, c) = (17, 40);
        let z = m.log_k(&xi, grid.center_x(c), grid.center_y(r)).unwrap();
        assert!((k[grid.index(r, c)] - z.exp()).abs() < 1e-12 * z.exp());
        let zero = m.field_on_grid(&vec![0.0; m.len()], &grid).unwrap();
        assert!(zero.iter().all(|v| *v == 1.0));
        let outside = GridSpec::covering(51, 51, 1100.0, 1020.0, 0.0, 0.0).unwrap();
        assert!(m.field_on_grid(&xi, &outside).is_err());
    }
}
